//! Parse-forest model checking: given a context-free grammar G, a word w and
//! a PDL tree formula φ, decide whether some parse tree of w under G
//! satisfies φ, and exhibit or filter the witnesses.
//!
//! The pipeline has three algorithmic regimes, dispatched on structural
//! properties of the grammar:
//!
//! * acyclic and ε-free grammars: the parse forest is finite, so exhaustive
//!   enumeration plus direct model checking is complete;
//! * acyclic grammars: the forest automaton is localized into a
//!   non-recursive DTD and the formula is checked against it with two-way
//!   alternating parity word automata over XML streams;
//! * ε-free grammars: parse trees are rotated so that unit-production
//!   chains become sibling sequences, again yielding a non-recursive DTD.
//!
//! Grammars outside all three classes fall back to budgeted enumeration,
//! which can answer "satisfiable" but never a definitive "no".

pub mod apwa;
pub mod dtdreduce;
pub mod forest;
pub mod grammar;
pub mod pdl;
pub mod reductions;
pub mod solver;

#[doc(hidden)]
pub mod testgen;
