//! Encodings of other decision problems into the forest question, used as
//! correctness stress tests: width-3 CNF satisfiability maps onto a fixed
//! comb-shaped grammar, and linear-bounded-automaton membership maps onto a
//! fixed cyclic chain grammar. Both come with independent oracles (valuation
//! enumeration, configuration-graph search) so generated instances carry a
//! known expected verdict.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::grammar::{Cfg, Production};
use crate::pdl::{NodeFormula, PathFormula};
use crate::solver::PfmcInstance;

// ---------------------------------------------------------------------------
// Width-3 CNF satisfiability

/// A width-3 CNF instance. Literals are signed 1-based variable indices;
/// clauses hold exactly three literals, repetition allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatInstance {
    pub vars: usize,
    pub clauses: Vec<[i32; 3]>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SatError {
    #[error("missing `p cnf <vars> <clauses>` header")]
    MissingHeader,
    #[error("malformed header token `{0}`")]
    BadHeader(String),
    #[error("literal `{0}` is not an integer")]
    BadLiteral(String),
    #[error("clause {0} is empty")]
    EmptyClause(usize),
    #[error("clause {0} has more than three literals")]
    WideClause(usize),
    #[error("literal {lit} outside the declared {vars} variables")]
    VarOutOfRange { lit: i32, vars: usize },
    #[error("expected {declared} clauses, found {found}")]
    ClauseCountMismatch { declared: usize, found: usize },
    #[error("an instance needs at least one variable")]
    NoVariables,
}

impl SatInstance {
    pub fn validate(&self) -> Result<(), SatError> {
        if self.vars == 0 {
            return Err(SatError::NoVariables);
        }
        for clause in &self.clauses {
            for &lit in clause {
                if lit == 0 || lit.unsigned_abs() as usize > self.vars {
                    return Err(SatError::VarOutOfRange { lit, vars: self.vars });
                }
            }
        }
        Ok(())
    }
}

/// Parses DIMACS CNF: `c` comment lines, one `p cnf <vars> <clauses>`
/// header, then zero-terminated clauses. Clauses of one or two literals are
/// padded by repeating the last literal; wider clauses are rejected.
pub fn parse_dimacs(text: &str) -> Result<SatInstance, SatError> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        let mut words = line.split_whitespace().peekable();
        if words.peek().is_none_or(|w| *w == "c") {
            continue;
        }
        tokens.extend(words.map(str::to_string));
    }
    let mut it = tokens.into_iter();
    if it.next().as_deref() != Some("p") || it.next().as_deref() != Some("cnf") {
        return Err(SatError::MissingHeader);
    }
    let mut count = |name: Option<String>| -> Result<usize, SatError> {
        let t = name.ok_or(SatError::MissingHeader)?;
        t.parse().map_err(|_| SatError::BadHeader(t))
    };
    let vars = count(it.next())?;
    let declared = count(it.next())?;
    let mut clauses: Vec<[i32; 3]> = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    for t in it {
        let lit: i32 = t.parse().map_err(|_| SatError::BadLiteral(t))?;
        if lit != 0 {
            current.push(lit);
            continue;
        }
        let &last = current.last().ok_or(SatError::EmptyClause(clauses.len() + 1))?;
        if current.len() > 3 {
            return Err(SatError::WideClause(clauses.len() + 1));
        }
        while current.len() < 3 {
            current.push(last);
        }
        clauses.push([current[0], current[1], current[2]]);
        current.clear();
    }
    if !current.is_empty() || clauses.len() != declared {
        return Err(SatError::ClauseCountMismatch { declared, found: clauses.len() });
    }
    let inst = SatInstance { vars, clauses };
    inst.validate()?;
    Ok(inst)
}

fn conj(items: impl IntoIterator<Item = NodeFormula>) -> NodeFormula {
    let mut it = items.into_iter();
    match it.next() {
        None => NodeFormula::tt(),
        Some(first) => it.fold(first, NodeFormula::and),
    }
}

fn disj(items: impl IntoIterator<Item = NodeFormula>) -> NodeFormula {
    let mut it = items.into_iter();
    match it.next() {
        None => NodeFormula::ff(),
        Some(first) => it.fold(first, NodeFormula::or),
    }
}

/// `k`-fold child step, `k >= 1`.
fn down_k(k: usize) -> PathFormula {
    let mut p = PathFormula::down();
    for _ in 1..k {
        p = p.seq(PathFormula::down());
    }
    p
}

/// Comb encoding of a CNF instance: parse trees of `a^n` under the fixed
/// grammar `S -> S F | S T | F | T; F -> a; T -> a` are in bijection with
/// valuations (the `i`th spine node's leaf child is `T` iff variable `i` is
/// true, counting from the root), and the formula checks one satisfied
/// literal per clause by walking `(S?; down)^k` to the `k`th spine node.
pub fn sat3_to_pfmc(s: &SatInstance) -> PfmcInstance {
    let spine_step = || PathFormula::test(NodeFormula::atom("S")).seq(PathFormula::down());
    let reach = |k: usize| (1..k).fold(spine_step(), |p, _| p.seq(spine_step()));
    let formula = conj(s.clauses.iter().map(|clause| {
        disj(clause.iter().map(|&lit| {
            let leaf = NodeFormula::atom(if lit < 0 { "F" } else { "T" });
            NodeFormula::diamond(reach(lit.unsigned_abs() as usize), leaf)
        }))
    }));
    let productions = vec![
        Production::new("S", vec!["S".into(), "F".into()]),
        Production::new("S", vec!["S".into(), "T".into()]),
        Production::new("S", vec!["F".into()]),
        Production::new("S", vec!["T".into()]),
        Production::new("F", vec!["a".into()]),
        Production::new("T", vec!["a".into()]),
    ];
    let grammar = Cfg {
        nonterminals: ["S", "F", "T"].map(String::from).into_iter().collect(),
        terminals: BTreeSet::from(["a".to_string()]),
        productions,
        axiom: "S".to_string(),
        features: Default::default(),
    };
    PfmcInstance { grammar, word: vec!["a".to_string(); s.vars], formula }
}

// ---------------------------------------------------------------------------
// Linear bounded automata

/// One transition: in state `from` reading `read`, write `write`, enter
/// `to`, and move the head by `dir` (one of -1, 0, 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LbaMove {
    pub from: String,
    pub read: String,
    pub to: String,
    pub write: String,
    pub dir: i8,
}

/// A linear bounded automaton. State and tape-symbol order is significant
/// (formulas address both by position); the first two tape symbols are the
/// left and right endmarkers, which are never overwritten or stepped past.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LbaSpec {
    pub states: Vec<String>,
    pub initial: String,
    pub finals: BTreeSet<String>,
    pub tape: Vec<String>,
    pub input: BTreeSet<String>,
    pub delta: Vec<LbaMove>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LbaError {
    #[error("machine needs at least one state")]
    NoStates,
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("`{0}` is not a declared state")]
    UnknownState(String),
    #[error("`{0}` is not a declared tape symbol")]
    UnknownSymbol(String),
    #[error("tape alphabet needs the two endmarkers first")]
    MissingEndmarkers,
    #[error("input alphabet symbol `{0}` is outside the tape alphabet")]
    InputOutsideTape(String),
    #[error("head move `{0}` is not one of -1, 0, 1")]
    BadDirection(i8),
    #[error("transition on `{read}` would erase or cross an endmarker")]
    EndmarkerViolation { read: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing `{0}` declaration")]
    MissingDeclaration(&'static str),
    #[error("input word must be endmarker-delimited and over the input alphabet")]
    MalformedInput,
}

impl LbaSpec {
    pub fn validate(&self) -> Result<(), LbaError> {
        if self.states.is_empty() {
            return Err(LbaError::NoStates);
        }
        let mut seen = BTreeSet::new();
        for s in &self.states {
            if !seen.insert(s.clone()) {
                return Err(LbaError::DuplicateName(s.clone()));
            }
        }
        if self.tape.len() < 2 {
            return Err(LbaError::MissingEndmarkers);
        }
        let mut seen = BTreeSet::new();
        for s in &self.tape {
            if !seen.insert(s.clone()) {
                return Err(LbaError::DuplicateName(s.clone()));
            }
        }
        let is_state = |s: &String| self.states.contains(s);
        let is_sym = |s: &String| self.tape.contains(s);
        if !is_state(&self.initial) {
            return Err(LbaError::UnknownState(self.initial.clone()));
        }
        if let Some(s) = self.finals.iter().find(|s| !is_state(s)) {
            return Err(LbaError::UnknownState(s.clone()));
        }
        if let Some(s) = self.input.iter().find(|s| !is_sym(s)) {
            return Err(LbaError::InputOutsideTape(s.clone()));
        }
        let (left, right) = (&self.tape[0], &self.tape[1]);
        for t in &self.delta {
            if !is_state(&t.from) {
                return Err(LbaError::UnknownState(t.from.clone()));
            }
            if !is_state(&t.to) {
                return Err(LbaError::UnknownState(t.to.clone()));
            }
            if !is_sym(&t.read) {
                return Err(LbaError::UnknownSymbol(t.read.clone()));
            }
            if !is_sym(&t.write) {
                return Err(LbaError::UnknownSymbol(t.write.clone()));
            }
            if !(-1..=1).contains(&t.dir) {
                return Err(LbaError::BadDirection(t.dir));
            }
            let keeps_left = &t.read != left || (&t.write == left && t.dir >= 0);
            let keeps_right = &t.read != right || (&t.write == right && t.dir <= 0);
            if !keeps_left || !keeps_right {
                return Err(LbaError::EndmarkerViolation { read: t.read.clone() });
            }
        }
        Ok(())
    }
}

/// Parses the line-based machine format: `states`, `initial`, `final`,
/// `tape` and `input` declarations plus one `delta q a -> q' a' d` line per
/// transition. Blank lines and `#` comments are skipped; `final` may be
/// omitted or list nothing for an empty set. The result is validated.
pub fn parse_lba_text(text: &str) -> Result<LbaSpec, LbaError> {
    let mut states: Option<Vec<String>> = None;
    let mut initial: Option<String> = None;
    let mut finals: BTreeSet<String> = BTreeSet::new();
    let mut tape: Option<Vec<String>> = None;
    let mut input: Option<BTreeSet<String>> = None;
    let mut delta = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |msg: &str| LbaError::Parse { line: i + 1, msg: msg.to_string() };
        let mut words = line.split_whitespace();
        let Some(head) = words.next() else { continue };
        if head.starts_with('#') {
            continue;
        }
        let rest: Vec<String> = words.map(str::to_string).collect();
        match head {
            "states" => states = Some(rest),
            "initial" => match <[String; 1]>::try_from(rest) {
                Ok([q]) => initial = Some(q),
                Err(_) => return Err(err("expected exactly one initial state")),
            },
            "final" => finals = rest.into_iter().collect(),
            "tape" => tape = Some(rest),
            "input" => input = Some(rest.into_iter().collect()),
            "delta" => {
                let [from, read, arrow, to, write, dir] =
                    <[String; 6]>::try_from(rest).map_err(|_| {
                        err("expected `delta q a -> q' a' d`")
                    })?;
                if arrow != "->" {
                    return Err(err("expected `->` after the read symbol"));
                }
                let dir = dir.parse().map_err(|_| err("head move must be -1, 0 or 1"))?;
                delta.push(LbaMove { from, read, to, write, dir });
            }
            _ => return Err(err("unknown declaration")),
        }
    }
    let spec = LbaSpec {
        states: states.ok_or(LbaError::MissingDeclaration("states"))?,
        initial: initial.ok_or(LbaError::MissingDeclaration("initial"))?,
        finals,
        tape: tape.ok_or(LbaError::MissingDeclaration("tape"))?,
        input: input.ok_or(LbaError::MissingDeclaration("input"))?,
        delta,
    };
    spec.validate()?;
    Ok(spec)
}

fn lba_grammar() -> Cfg {
    let mut productions = vec![
        Production::new("S", vec!["H".into()]),
        Production::new("S", vec!["Hbar".into()]),
    ];
    for lhs in ["H", "Hbar"] {
        for rhs in ["H", "Hbar", "C", "Cbar"] {
            productions.push(Production::new(lhs, vec![rhs.into()]));
        }
    }
    for lhs in ["C", "Cbar"] {
        for rhs in ["C", "Cbar", "A", "Abar"] {
            productions.push(Production::new(lhs, vec![rhs.into()]));
        }
    }
    for lhs in ["A", "Abar"] {
        for rhs in ["A", "Abar", "S", "a"] {
            productions.push(Production::new(lhs, vec![rhs.into()]));
        }
    }
    Cfg {
        nonterminals: ["S", "H", "Hbar", "C", "Cbar", "A", "Abar"]
            .map(String::from)
            .into_iter()
            .collect(),
        terminals: BTreeSet::from(["a".to_string()]),
        productions,
        axiom: "S".to_string(),
        features: Default::default(),
    }
}

/// Chain encoding of LBA membership over the fixed word `a`: every parse
/// tree is a chain of nonterminals, read as a sequence of configurations
/// `S · head block(n) · state block(l) · n cell blocks(m each)`, and the
/// formula pins the initial configuration to the input, propagates the
/// transition relation between successive configurations, and requires the
/// chain to stop in an accepting one. Satisfiable iff the machine accepts.
pub fn lba_to_pfmc(machine: &LbaSpec, x: &[String]) -> Result<PfmcInstance, LbaError> {
    machine.validate()?;
    let n = x.len();
    let delimited = n >= 2 && x[0] == machine.tape[0] && x[n - 1] == machine.tape[1];
    let inner_ok = x[1..n.saturating_sub(1)]
        .iter()
        .all(|b| machine.input.contains(b) && *b != machine.tape[0] && *b != machine.tape[1]);
    let ends_ok =
        delimited && machine.input.contains(&x[0]) && machine.input.contains(&x[n - 1]);
    if !ends_ok || !inner_ok {
        return Err(LbaError::MalformedInput);
    }
    let l = machine.states.len();
    let m = machine.tape.len();
    let state_index = |q: &str| machine.states.iter().position(|s| s == q).unwrap() + 1;
    let sym_index = |a: &str| machine.tape.iter().position(|s| s == a).unwrap() + 1;

    let dia = |k: usize, f: NodeFormula| NodeFormula::diamond(down_k(k), f);
    let atom = NodeFormula::atom;
    // block check: the addressed slot holds the marked label, the rest of
    // the block its barred form
    let block = |base: usize, width: usize, at: usize, mark: &str, bar: &str| {
        let inner = conj((1..=width).map(|j| {
            dia(j, atom(if j == at { mark } else { bar }))
        }));
        if base == 0 { inner } else { dia(base, inner) }
    };
    let head_at = |h: usize| block(0, n, h, "H", "Hbar");
    let state_is = |k: usize| block(n, l, k, "C", "Cbar");
    let cell_is = |i: usize, j: usize| block(n + l + (i - 1) * m, m, j, "A", "Abar");
    let next = || down_k(1 + n + l + n * m);
    let next_is_leaf = || NodeFormula::diamond(next(), atom("a"));
    let everywhere = |f: NodeFormula| NodeFormula::boxed(PathFormula::down().star(), f);

    let conf = everywhere(atom("S").implies(conj([
        disj((1..=n).map(head_at)),
        disj((1..=l).map(state_is)),
        conj((1..=n).map(|i| disj((1..=m).map(|j| cell_is(i, j))))),
        NodeFormula::diamond(next(), atom("a").or(atom("S"))),
    ])));
    let init = conj(
        [atom("S"), head_at(1), state_is(state_index(&machine.initial))]
            .into_iter()
            .chain((1..=n).map(|i| cell_is(i, sym_index(&x[i - 1])))),
    );
    let fin = everywhere(
        atom("S")
            .and(next_is_leaf())
            .implies(disj(machine.finals.iter().map(|q| state_is(state_index(q))))),
    );
    let trans = everywhere(atom("S").and(next_is_leaf().not()).implies(disj(
        (1..=n).flat_map(|h| {
            machine.delta.iter().filter_map(move |t| {
                let target = h as i64 + t.dir as i64;
                if !(1..=n as i64).contains(&target) {
                    // cannot fire on any chain that encodes a tape, since
                    // the endmarkers pin the head inside [1, n]
                    return None;
                }
                Some((h, target as usize, t))
            })
        })
        .map(|(h, target, t)| {
            conj([
                head_at(h),
                state_is(state_index(&t.from)),
                cell_is(h, sym_index(&t.read)),
                conj((1..=n).filter(|&i| i != h).map(|i| {
                    disj((1..=m).map(|j| {
                        cell_is(i, j).and(NodeFormula::diamond(next(), cell_is(i, j)))
                    }))
                })),
                NodeFormula::diamond(
                    next(),
                    conj([
                        head_at(target),
                        state_is(state_index(&t.to)),
                        cell_is(h, sym_index(&t.write)),
                    ]),
                ),
            ])
        }),
    )));

    let formula = conj([conf, init, fin, trans]);
    Ok(PfmcInstance { grammar: lba_grammar(), word: vec!["a".to_string()], formula })
}

