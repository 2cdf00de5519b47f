//! Seeded random generators shared by unit, property, and acceptance
//! tests. Not part of the public API.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::forest::Tree;
use crate::grammar::{Cfg, Production};
use crate::pdl::{NodeFormula, PathFormula};
use std::collections::{BTreeMap, BTreeSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tree(rng: &mut ChaCha8Rng, labels: &[&str], max_depth: usize) -> Tree {
    let label = labels.choose(rng).unwrap().to_string();
    if max_depth <= 1 || rng.random_bool(0.3) {
        return Tree::leaf(label);
    }
    let width = rng.random_range(1..=3);
    let children =
        (0..width).map(|_| random_tree(rng, labels, max_depth - 1)).collect();
    Tree::node(label, children)
}

/// A node formula with roughly `size` constructors over the given atoms.
pub fn random_node_formula(
    rng: &mut ChaCha8Rng,
    atoms: &[&str],
    size: usize,
) -> NodeFormula {
    if size <= 1 {
        return match rng.random_range(0..4u8) {
            0 => NodeFormula::tt(),
            1 => NodeFormula::ff(),
            _ => NodeFormula::atom(atoms.choose(rng).unwrap()),
        };
    }
    match rng.random_range(0..9u8) {
        0 => random_node_formula(rng, atoms, size - 1).not(),
        1 | 2 => {
            let left = rng.random_range(1..size);
            random_node_formula(rng, atoms, left)
                .and(random_node_formula(rng, atoms, size - left))
        }
        3 => {
            let left = rng.random_range(1..size);
            random_node_formula(rng, atoms, left)
                .or(random_node_formula(rng, atoms, size - left))
        }
        4 => {
            let left = rng.random_range(1..size);
            random_node_formula(rng, atoms, left)
                .implies(random_node_formula(rng, atoms, size - left))
        }
        5 => {
            let left = rng.random_range(1..size);
            random_node_formula(rng, atoms, left)
                .iff(random_node_formula(rng, atoms, size - left))
        }
        6 | 7 => {
            let left = 1 + rng.random_range(0..size.max(2) - 1);
            NodeFormula::diamond(
                random_path_formula(rng, atoms, left),
                random_node_formula(rng, atoms, size.saturating_sub(left).max(1)),
            )
        }
        _ => {
            let left = 1 + rng.random_range(0..size.max(2) - 1);
            NodeFormula::boxed(
                random_path_formula(rng, atoms, left),
                random_node_formula(rng, atoms, size.saturating_sub(left).max(1)),
            )
        }
    }
}

pub fn random_path_formula(
    rng: &mut ChaCha8Rng,
    atoms: &[&str],
    size: usize,
) -> PathFormula {
    if size <= 1 {
        return match rng.random_range(0..4u8) {
            0 => PathFormula::down(),
            1 => PathFormula::right(),
            2 => PathFormula::up(),
            _ => PathFormula::left(),
        };
    }
    match rng.random_range(0..6u8) {
        0 | 1 => {
            let left = rng.random_range(1..size);
            random_path_formula(rng, atoms, left)
                .seq(random_path_formula(rng, atoms, size - left))
        }
        2 => {
            let left = rng.random_range(1..size);
            random_path_formula(rng, atoms, left)
                .alt(random_path_formula(rng, atoms, size - left))
        }
        3 => random_path_formula(rng, atoms, size - 1).star(),
        4 => random_path_formula(rng, atoms, size - 1).inverse(),
        _ => PathFormula::test(random_node_formula(rng, atoms, size - 1)),
    }
}

fn cfg_from_parts(nts: Vec<String>, ts: Vec<String>, productions: Vec<Production>) -> Cfg {
    let axiom = nts[0].clone();
    Cfg {
        nonterminals: nts.into_iter().collect::<BTreeSet<_>>(),
        terminals: ts.into_iter().collect::<BTreeSet<_>>(),
        productions,
        axiom,
        features: BTreeMap::new(),
    }
}

/// ε-free grammar whose unit productions only descend the nonterminal
/// order, so it is acyclic: every forest is finite.
pub fn random_acyclic_epsfree_cfg(rng: &mut ChaCha8Rng, max_nts: usize) -> Cfg {
    random_epsfree_cfg_impl(rng, max_nts, true)
}

/// ε-free grammar that may contain unit cycles.
pub fn random_epsfree_cfg(rng: &mut ChaCha8Rng, max_nts: usize) -> Cfg {
    random_epsfree_cfg_impl(rng, max_nts, false)
}

/// Acyclic grammar that may contain ε-productions. Right-hand-side
/// nonterminals strictly descend the order, so no symbol re-derives itself
/// even through nullable contexts.
pub fn random_acyclic_cfg(rng: &mut ChaCha8Rng, max_nts: usize) -> Cfg {
    let k = rng.random_range(1..=max_nts);
    let nts: Vec<String> = (0..k).map(|i| format!("N{i}")).collect();
    let terms = ["a", "b", "c"];
    let nterms = rng.random_range(1..=terms.len());
    let ts: Vec<String> = terms[..nterms].iter().map(|s| s.to_string()).collect();
    let mut productions = Vec::new();
    for (i, lhs) in nts.iter().enumerate() {
        let nprods = rng.random_range(1..=3);
        for _ in 0..nprods {
            if rng.random_bool(0.25) {
                productions.push(Production::new(lhs.clone(), Vec::new()));
                continue;
            }
            let len = rng.random_range(1..=3);
            let mut rhs = Vec::new();
            for _ in 0..len {
                if rng.random_bool(0.5) || i + 1 == k {
                    rhs.push(ts.choose(rng).unwrap().clone());
                } else {
                    let j = rng.random_range(i + 1..k);
                    rhs.push(nts[j].clone());
                }
            }
            productions.push(Production::new(lhs.clone(), rhs));
        }
        productions.push(Production::new(lhs.clone(), vec![ts.choose(rng).unwrap().clone()]));
    }
    productions.sort_by(|a, b| (&a.lhs, &a.rhs).cmp(&(&b.lhs, &b.rhs)));
    productions.dedup();
    cfg_from_parts(nts, ts, productions)
}

fn random_epsfree_cfg_impl(rng: &mut ChaCha8Rng, max_nts: usize, acyclic: bool) -> Cfg {
    let k = rng.random_range(1..=max_nts);
    let nts: Vec<String> = (0..k).map(|i| format!("N{i}")).collect();
    let terms = ["a", "b", "c"];
    let nterms = rng.random_range(1..=terms.len());
    let ts: Vec<String> = terms[..nterms].iter().map(|s| s.to_string()).collect();
    let mut productions = Vec::new();
    for (i, lhs) in nts.iter().enumerate() {
        let nprods = rng.random_range(1..=3);
        for _ in 0..nprods {
            let len = rng.random_range(1..=3);
            let mut rhs = Vec::new();
            for _ in 0..len {
                if rng.random_bool(0.6) || (acyclic && len == 1 && i + 1 == k) {
                    rhs.push(ts.choose(rng).unwrap().clone());
                } else if acyclic && len == 1 {
                    // unit productions must descend to stay acyclic
                    let j = rng.random_range(i + 1..k);
                    rhs.push(nts[j].clone());
                } else {
                    rhs.push(nts.choose(rng).unwrap().clone());
                }
            }
            productions.push(Production::new(lhs.clone(), rhs));
        }
        // guarantee productivity: one all-terminal fallback production
        productions.push(Production::new(
            lhs.clone(),
            vec![ts.choose(rng).unwrap().clone()],
        ));
    }
    productions.sort_by(|a, b| (&a.lhs, &a.rhs).cmp(&(&b.lhs, &b.rhs)));
    productions.dedup();
    cfg_from_parts(nts, ts, productions)
}

pub fn random_word(rng: &mut ChaCha8Rng, g: &Cfg, max_len: usize) -> Vec<String> {
    let ts: Vec<&String> = g.terminals.iter().collect();
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| ts.choose(rng).unwrap().to_string()).collect()
}

/// A word the grammar actually derives, found by a random capped
/// derivation; `None` when the cap is hit or the yield is too long.
pub fn random_derivation_word(
    rng: &mut ChaCha8Rng,
    g: &Cfg,
    max_len: usize,
) -> Option<Vec<String>> {
    let mut sentential: Vec<String> = vec![g.axiom.clone()];
    for _ in 0..60 {
        let Some(pos) = sentential.iter().position(|s| g.nonterminals.contains(s)) else {
            return if sentential.len() <= max_len && !sentential.is_empty() {
                Some(sentential)
            } else {
                None
            };
        };
        let options: Vec<_> = g.productions_of(&sentential[pos]).collect();
        let p = options.choose(rng)?;
        let mut next = sentential[..pos].to_vec();
        next.extend(p.rhs.iter().cloned());
        next.extend(sentential[pos + 1..].iter().cloned());
        if next.len() > 4 * max_len + 4 {
            return None;
        }
        sentential = next;
    }
    None
}

/// Clauses over variables 1..=n_vars; a literal is ±v. Clauses may have
/// fewer than three distinct literals.
pub fn random_3sat(rng: &mut ChaCha8Rng, n_vars: usize, n_clauses: usize) -> Vec<Vec<i64>> {
    (0..n_clauses)
        .map(|_| {
            let width = rng.random_range(1..=3);
            (0..width)
                .map(|_| {
                    let v = rng.random_range(1..=n_vars) as i64;
                    if rng.random_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect()
        })
        .collect()
}

/// Exhaustive satisfiability check, the frozen oracle for the 3SAT route.
pub fn brute_sat(n_vars: usize, clauses: &[Vec<i64>]) -> bool {
    assert!(n_vars <= 24, "oracle is exponential in the variable count");
    (0u64..(1 << n_vars)).any(|mask| {
        clauses.iter().all(|clause| {
            clause.iter().any(|&lit| {
                let v = lit.unsigned_abs() as usize;
                let set = mask & (1 << (v - 1)) != 0;
                (lit > 0) == set
            })
        })
    })
}

/// Non-recursive DTD: content models only mention later nonterminals, drawn
/// from a few shapes (empty word, short words, unions, and starred pairs).
pub fn random_dtd(rng: &mut ChaCha8Rng, max_nts: usize) -> crate::dtdreduce::Dtd {
    use crate::dtdreduce::{Dtd, Nfa};
    let k = rng.random_range(1..=max_nts);
    let nts: Vec<String> = (0..k).map(|i| format!("X{i}")).collect();
    let mut content = BTreeMap::new();
    for (i, lhs) in nts.iter().enumerate() {
        let later = &nts[i + 1..];
        let nfa = if later.is_empty() || rng.random_bool(0.3) {
            Nfa::epsilon()
        } else {
            fn word(rng: &mut ChaCha8Rng, later: &[String]) -> Nfa {
                let len = rng.random_range(1..=2);
                let letters: Vec<String> =
                    (0..len).map(|_| later.choose(rng).unwrap().clone()).collect();
                Nfa::word(&letters)
            }
            match rng.random_range(0..3) {
                0 => word(rng, later),
                1 => Nfa::union(&word(rng, later), &word(rng, later)),
                _ => {
                    // (Y Z)*: a two-state loop
                    let y = later.choose(rng).unwrap().clone();
                    let z = later.choose(rng).unwrap().clone();
                    Nfa {
                        states: vec!["l0".to_string(), "l1".to_string()],
                        alphabet: BTreeSet::from([y.clone(), z.clone()]),
                        transitions: vec![(0, y, 1), (1, z, 0)],
                        initial: BTreeSet::from([0]),
                        finals: BTreeSet::from([0]),
                    }
                }
            }
        };
        content.insert(lhs.clone(), nfa);
    }
    Dtd {
        nonterminals: nts.iter().cloned().collect(),
        start: nts[0].clone(),
        content,
    }
}
