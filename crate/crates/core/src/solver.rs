//! End-to-end satisfiability over parse forests.
//!
//! A [`PfmcInstance`] asks: does some parse tree of `word` under `grammar`
//! satisfy `formula`? [`solve`] dispatches on the grammar class:
//!
//! * acyclic and epsilon-free: the forest is finite, enumerate and check;
//! * acyclic: reduce the localized forest to a non-recursive DTD and decide
//!   emptiness of a conjoined stream automaton;
//! * epsilon-free: rotate unit chains into sibling runs, then as above;
//! * otherwise: budgeted enumeration, a semi-decision that may answer
//!   `Unknown`.
//!
//! The automata routes decide satisfiability only; when a witness tree is
//! requested they are followed by a budgeted enumeration that hunts for one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::{Duration, Instant};

use crate::apwa::{self, compile_dtd, compile_formula, conjoin, ApwaError};
use crate::dtdreduce::{dtd_from_acyclic, relabel_formula, rotate_epsfree, DtdError, PropInterp};
use crate::forest::{
    build_forest_automaton, collect_trees_up_to, enumerate_trees, localize, trim, Enumerated,
    ForestError, Tree,
};
use crate::grammar::{
    binarize, check_acyclic, check_epsilon_free, Cfg, Production, RESERVED_NAMES,
};
use crate::pdl::{model_check, EvalCtx, EvalError, NodeF, NodeFormula, PathF, PathFormula};

pub const DEFAULT_BUDGET: usize = 10_000;

#[derive(Debug, Clone)]
pub struct PfmcInstance {
    pub grammar: Cfg,
    pub word: Vec<String>,
    pub formula: NodeFormula,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Satisfiable,
    Unsatisfiable,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Satisfiable => "satisfiable",
            Verdict::Unsatisfiable => "unsatisfiable",
            Verdict::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Enumerate,
    Dtd,
    Rotate,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Enumerate => "enumerate",
            Method::Dtd => "dtd",
            Method::Rotate => "rotate",
        })
    }
}

/// Work counters; automaton fields stay zero on the enumeration method.
#[derive(Debug, Clone, Default)]
pub struct Stats {
    pub trees_visited: usize,
    pub formula_states: usize,
    pub dtd_states: usize,
    pub product_states: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct PfmcAnswer {
    pub verdict: Verdict,
    pub witness: Option<Tree>,
    pub method: Method,
    pub stats: Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    #[default]
    Auto,
    Enumerate,
    Dtd,
    Rotate,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub method: MethodChoice,
    /// Tree cap for enumeration-based methods and for witness hunts.
    pub budget: usize,
    /// Ask the automata methods to follow up with a witness search.
    pub want_witness: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { method: MethodChoice::Auto, budget: DEFAULT_BUDGET, want_witness: false }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("unknown atomic proposition `{0}` for this grammar")]
    UnknownAtom(String),
    #[error("method `{method}` needs {requirement}")]
    MethodInapplicable { method: Method, requirement: &'static str },
    #[error("recognition expects a nonempty word")]
    EmptyWord,
    #[error("`{0}` is reserved and cannot serve as a recognition proposition")]
    ReservedProposition(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Dtd(#[from] DtdError),
    #[error(transparent)]
    Automaton(#[from] ApwaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn node_atoms(f: &NodeFormula, out: &mut BTreeSet<String>) {
    match f.as_ref() {
        NodeF::True | NodeF::False => {}
        NodeF::Atom(p) => {
            out.insert(p.clone());
        }
        NodeF::Not(a) => node_atoms(a, out),
        NodeF::And(a, b) | NodeF::Or(a, b) | NodeF::Implies(a, b) | NodeF::Iff(a, b) => {
            node_atoms(a, out);
            node_atoms(b, out);
        }
        NodeF::Diamond(p, a) | NodeF::Box(p, a) => {
            path_atoms(p, out);
            node_atoms(a, out);
        }
    }
}

fn path_atoms(p: &PathFormula, out: &mut BTreeSet<String>) {
    match p.as_ref() {
        PathF::Step(_) => {}
        PathF::Seq(x, y) | PathF::Alt(x, y) => {
            path_atoms(x, out);
            path_atoms(y, out);
        }
        PathF::Star(x) | PathF::Inverse(x) => path_atoms(x, out),
        PathF::Test(f) => node_atoms(f, out),
    }
}

/// Checks the instance invariant: every formula atom is a symbol, feature
/// or `eps` of the grammar.
pub fn validate_instance(inst: &PfmcInstance) -> Result<(), SolveError> {
    let ctx = EvalCtx::from_cfg(&inst.grammar);
    let mut atoms = BTreeSet::new();
    node_atoms(&inst.formula, &mut atoms);
    for a in atoms {
        if !ctx.knows(&a) {
            return Err(SolveError::UnknownAtom(a));
        }
    }
    Ok(())
}

/// Dispatches per grammar class, or per the explicit method override.
pub fn solve(inst: &PfmcInstance, opt: &SolveOptions) -> Result<PfmcAnswer, SolveError> {
    validate_instance(inst)?;
    let acyclic = check_acyclic(&inst.grammar);
    let epsfree = check_epsilon_free(&inst.grammar);
    let mut answer = match opt.method {
        MethodChoice::Auto => {
            if acyclic && epsfree {
                solve_enumerate(inst, opt.budget)?
            } else if acyclic {
                solve_acyclic_dtd(inst)?
            } else if epsfree {
                solve_epsfree_rotation(inst)?
            } else {
                solve_enumerate(inst, opt.budget)?
            }
        }
        MethodChoice::Enumerate => solve_enumerate(inst, opt.budget)?,
        MethodChoice::Dtd => {
            if !acyclic {
                return Err(SolveError::MethodInapplicable {
                    method: Method::Dtd,
                    requirement: "an acyclic grammar",
                });
            }
            solve_acyclic_dtd(inst)?
        }
        MethodChoice::Rotate => {
            if !epsfree {
                return Err(SolveError::MethodInapplicable {
                    method: Method::Rotate,
                    requirement: "an epsilon-free grammar",
                });
            }
            solve_epsfree_rotation(inst)?
        }
    };
    if opt.want_witness && answer.verdict == Verdict::Satisfiable && answer.witness.is_none() {
        let (witness, visited) = budgeted_witness(inst, opt.budget)?;
        answer.witness = witness;
        answer.stats.trees_visited += visited;
    }
    Ok(answer)
}

/// Enumerates the trimmed forest up to `budget` trees and model-checks each
/// tree. Complete whenever the enumeration is exhaustive, which is
/// guaranteed for acyclic grammars; otherwise exhaustion yields `Unknown`.
pub fn solve_enumerate(inst: &PfmcInstance, budget: usize) -> Result<PfmcAnswer, SolveError> {
    validate_instance(inst)?;
    let t0 = Instant::now();
    let a = trim(&build_forest_automaton(&inst.grammar, &inst.word)?);
    let ctx = EvalCtx::from_cfg(&inst.grammar);
    let mut visited = 0usize;
    let mut truncated = false;
    let mut witness = None;
    for item in enumerate_trees(&a, budget) {
        match item {
            Enumerated::Tree(t) => {
                visited += 1;
                if model_check(&t, &inst.formula, &ctx)? {
                    witness = Some(t);
                    break;
                }
            }
            Enumerated::Truncated => truncated = true,
        }
    }
    let verdict = if witness.is_some() {
        Verdict::Satisfiable
    } else if truncated {
        Verdict::Unknown
    } else {
        Verdict::Unsatisfiable
    };
    Ok(PfmcAnswer {
        verdict,
        witness,
        method: Method::Enumerate,
        stats: Stats { trees_visited: visited, elapsed: t0.elapsed(), ..Stats::default() },
    })
}

fn automata_answer(
    method: Method,
    t0: Instant,
    formula_states: usize,
    dtd_states: usize,
    product: &apwa::Apwa,
) -> PfmcAnswer {
    let verdict =
        if apwa::is_empty(product) { Verdict::Unsatisfiable } else { Verdict::Satisfiable };
    PfmcAnswer {
        verdict,
        witness: None,
        method,
        stats: Stats {
            trees_visited: 0,
            formula_states,
            dtd_states,
            product_states: product.state_count(),
            elapsed: t0.elapsed(),
        },
    }
}

fn empty_forest_answer(method: Method, t0: Instant) -> PfmcAnswer {
    PfmcAnswer {
        verdict: Verdict::Unsatisfiable,
        witness: None,
        method,
        stats: Stats { elapsed: t0.elapsed(), ..Stats::default() },
    }
}

/// Decides satisfiability by reading the localized forest as a
/// non-recursive DTD, rewriting atoms to localized labels, compiling the
/// DTD and the formula to stream automata and testing the conjunction for
/// emptiness. No witness is produced here.
pub fn solve_acyclic_dtd(inst: &PfmcInstance) -> Result<PfmcAnswer, SolveError> {
    if !check_acyclic(&inst.grammar) {
        return Err(SolveError::MethodInapplicable {
            method: Method::Dtd,
            requirement: "an acyclic grammar",
        });
    }
    validate_instance(inst)?;
    let t0 = Instant::now();
    let a = localize(&trim(&build_forest_automaton(&inst.grammar, &inst.word)?));
    if a.initial.is_none() {
        return Ok(empty_forest_answer(Method::Dtd, t0));
    }
    let ctx = EvalCtx::from_cfg(&inst.grammar);
    let (dtd, interp) = dtd_from_acyclic(&a, &ctx)?;
    let f = relabel_formula(&inst.formula, &interp)?;
    let depth = dtd.nonterminals.len();
    let label_ctx = EvalCtx::from_labels(dtd.nonterminals.iter().cloned());
    let af = compile_formula(&f, &dtd.nonterminals, &label_ctx, depth)?;
    let ad = compile_dtd(&dtd, depth)?;
    let product = conjoin(&ad, &af)?;
    Ok(automata_answer(Method::Dtd, t0, af.state_count(), ad.state_count(), &product))
}

/// Decides satisfiability for epsilon-free grammars: binarize, transport
/// the formula, rotate unit chains into sibling runs, and test the
/// conjoined stream automata for emptiness. Handles cyclic grammars; the
/// rotated DTD stays non-recursive because spans shrink along content.
pub fn solve_epsfree_rotation(inst: &PfmcInstance) -> Result<PfmcAnswer, SolveError> {
    if !check_epsilon_free(&inst.grammar) {
        return Err(SolveError::MethodInapplicable {
            method: Method::Rotate,
            requirement: "an epsilon-free grammar",
        });
    }
    validate_instance(inst)?;
    let t0 = Instant::now();
    let bin = binarize(&inst.grammar);
    let transported = bin.transport(&inst.formula);
    let a = trim(&build_forest_automaton(&bin.base, &inst.word)?);
    if a.initial.is_none() {
        return Ok(empty_forest_answer(Method::Rotate, t0));
    }
    let ctx = EvalCtx::from_cfg(&bin.base);
    let rot = rotate_epsfree(&a, &ctx)?;
    let f = rot.anchored(&transported)?;
    // nesting shrinks the span per level, so the word length bounds depth
    let depth = inst.word.len() + 2;
    let af = compile_formula(&f, &rot.dtd.nonterminals, &rot.eval_ctx(), depth)?;
    let ad = compile_dtd(&rot.dtd, depth)?;
    let product = conjoin(&ad, &af)?;
    Ok(automata_answer(Method::Rotate, t0, af.state_count(), ad.state_count(), &product))
}

/// Budgeted hunt for a satisfying tree; returns the tree count visited.
fn budgeted_witness(
    inst: &PfmcInstance,
    budget: usize,
) -> Result<(Option<Tree>, usize), SolveError> {
    let a = trim(&build_forest_automaton(&inst.grammar, &inst.word)?);
    let ctx = EvalCtx::from_cfg(&inst.grammar);
    let mut visited = 0usize;
    for item in enumerate_trees(&a, budget) {
        if let Enumerated::Tree(t) = item {
            visited += 1;
            if model_check(&t, &inst.formula, &ctx)? {
                return Ok((Some(t), visited));
            }
        }
    }
    Ok((None, visited))
}

/// Does any tree with yield `w`, root labeled `root` and nodes labeled by
/// propositions satisfy `f`? Builds the universal grammar over the
/// proposition set (tokens, the root and the formula atoms): a nonterminal
/// copy `P` per proposition with all unary and binary productions, atoms
/// read as `P ∨ p`, answered on the rotation route. Trees never have
/// ε-labeled leaves.
pub fn recognize(f: &NodeFormula, w: &[String], root: &str) -> Result<bool, SolveError> {
    let inst = universal_instance(f, w, root)?;
    Ok(solve_epsfree_rotation(&inst)?.verdict == Verdict::Satisfiable)
}

/// The recognition instance behind [`recognize`], over the universal
/// grammar of the proposition set.
fn universal_instance(
    f: &NodeFormula,
    w: &[String],
    root: &str,
) -> Result<PfmcInstance, SolveError> {
    if w.is_empty() {
        return Err(SolveError::EmptyWord);
    }
    let mut ap: BTreeSet<String> = w.iter().cloned().collect();
    ap.insert(root.to_string());
    node_atoms(f, &mut ap);
    if let Some(bad) = ap.iter().find(|p| RESERVED_NAMES.contains(&p.as_str())) {
        return Err(SolveError::ReservedProposition(bad.clone()));
    }
    let mut copy: BTreeMap<String, String> = BTreeMap::new();
    for p in &ap {
        let mut cand = format!("{p}_nt");
        while ap.contains(&cand) {
            cand.push('_');
        }
        copy.insert(p.clone(), cand);
    }
    let nonterminals: BTreeSet<String> = copy.values().cloned().collect();
    let symbols: Vec<String> = nonterminals.iter().chain(ap.iter()).cloned().collect();
    let mut productions = Vec::new();
    for lhs in &nonterminals {
        for x in &symbols {
            productions.push(Production::new(lhs.clone(), vec![x.clone()]));
            for y in &symbols {
                productions.push(Production::new(lhs.clone(), vec![x.clone(), y.clone()]));
            }
        }
    }
    let grammar = Cfg {
        nonterminals,
        terminals: ap.clone(),
        productions,
        axiom: copy[root].clone(),
        features: BTreeMap::new(),
    };
    let mut interp = PropInterp::default();
    for p in &ap {
        interp.define(p.clone(), NodeFormula::atom(copy[p].clone()).or(NodeFormula::atom(p)));
    }
    let formula = relabel_formula(f, &interp)?;
    Ok(PfmcInstance { grammar, word: w.to_vec(), formula })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleVerdict {
    Satisfiable,
    /// No tree of at most the bound satisfies the formula, and none exists
    /// beyond the bound either: the whole forest was visited.
    UnsatisfiableWithinBound,
    /// The bound cut the forest short of a definite answer.
    Unknown,
}

/// Exhaustive check of every forest tree up to `size_bound` nodes,
/// regardless of grammar class; the validation baseline for the methods.
pub fn oracle_bruteforce(
    inst: &PfmcInstance,
    size_bound: usize,
) -> Result<(OracleVerdict, Option<Tree>), SolveError> {
    validate_instance(inst)?;
    let a = trim(&build_forest_automaton(&inst.grammar, &inst.word)?);
    let ctx = EvalCtx::from_cfg(&inst.grammar);
    let (trees, more) = collect_trees_up_to(&a, size_bound);
    for t in trees {
        if model_check(&t, &inst.formula, &ctx)? {
            return Ok((OracleVerdict::Satisfiable, Some(t)));
        }
    }
    if more {
        Ok((OracleVerdict::Unknown, None))
    } else {
        Ok((OracleVerdict::UnsatisfiableWithinBound, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{accepts_tree, count_trees, parse_tree_text, tree_yield, CountResult};
    use crate::grammar::parse_grammar_text;
    use crate::pdl::{parse_node_formula, MacroEnv};
    use crate::testgen;
    use rand::Rng;

    fn g(text: &str) -> Cfg {
        parse_grammar_text(text).unwrap()
    }

    fn f(text: &str) -> NodeFormula {
        parse_node_formula(text, &MacroEnv::builtins()).unwrap()
    }

    fn w(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    fn inst(grammar: &Cfg, word: &str, formula: &str) -> PfmcInstance {
        PfmcInstance { grammar: grammar.clone(), word: w(word), formula: f(formula) }
    }

    #[test]
    fn dispatch_matches_grammar_class() {
        let opt = SolveOptions::default();
        let plain = g("axiom S ; S -> \"a\" ;");
        assert_eq!(solve(&inst(&plain, "a", "a"), &opt).unwrap().method, Method::Enumerate);

        let nullable = g("axiom S ; S -> A \"a\" ; A -> ;");
        assert_eq!(solve(&inst(&nullable, "a", "a"), &opt).unwrap().method, Method::Dtd);

        let cyclic = g("axiom S ; S -> S | \"a\" ;");
        assert_eq!(solve(&inst(&cyclic, "a", "a"), &opt).unwrap().method, Method::Rotate);

        let both = g("axiom S ; S -> S | A \"a\" ; A -> ;");
        let hard = PfmcInstance { grammar: both, word: w("a"), formula: NodeFormula::ff() };
        let ans = solve(&hard, &SolveOptions { budget: 50, ..SolveOptions::default() }).unwrap();
        assert_eq!(ans.method, Method::Enumerate);
        assert_eq!(ans.verdict, Verdict::Unknown);
        assert_eq!(ans.stats.trees_visited, 50);
    }

    #[test]
    fn unit_cycle_grammar_on_rotation_route() {
        let cyclic = g("axiom S ; S -> S | \"a\" ;");
        let deep = inst(&cyclic, "a", "<down;down;down> a");
        let ans = solve(&deep, &SolveOptions::default()).unwrap();
        assert_eq!(ans.method, Method::Rotate);
        assert_eq!(ans.verdict, Verdict::Satisfiable);
        assert!(ans.witness.is_none());

        // the witness hunt finds the smallest satisfying tree
        let opt = SolveOptions { want_witness: true, ..SolveOptions::default() };
        let ans = solve(&deep, &opt).unwrap();
        assert_eq!(ans.witness, Some(parse_tree_text("(S (S (S a)))").unwrap()));

        let rooted = inst(&cyclic, "a", "a");
        assert_eq!(solve(&rooted, &SolveOptions::default()).unwrap().verdict, Verdict::Unsatisfiable);
    }

    #[test]
    fn method_override_is_checked_against_the_grammar() {
        let cyclic = g("axiom S ; S -> S | \"a\" ;");
        let nullable = g("axiom S ; S -> A \"a\" ; A -> ;");
        let pick = |m| SolveOptions { method: m, ..SolveOptions::default() };
        let e = solve(&inst(&cyclic, "a", "a"), &pick(MethodChoice::Dtd)).unwrap_err();
        assert!(matches!(e, SolveError::MethodInapplicable { method: Method::Dtd, .. }));
        let e = solve(&inst(&nullable, "a", "a"), &pick(MethodChoice::Rotate)).unwrap_err();
        assert!(matches!(e, SolveError::MethodInapplicable { method: Method::Rotate, .. }));
        let opt = SolveOptions { method: MethodChoice::Enumerate, budget: 100, ..SolveOptions::default() };
        let ok = solve(&inst(&cyclic, "a", "a"), &opt).unwrap();
        assert_eq!(ok.method, Method::Enumerate);
        assert_eq!(ok.verdict, Verdict::Unknown);
    }

    #[test]
    fn unknown_atom_is_rejected_upfront() {
        let plain = g("axiom S ; S -> \"a\" ;");
        let e = solve(&inst(&plain, "a", "zz"), &SolveOptions::default()).unwrap_err();
        assert!(matches!(e, SolveError::UnknownAtom(p) if p == "zz"));
    }

    fn symbol_atoms(grammar: &Cfg) -> Vec<String> {
        grammar.nonterminals.union(&grammar.terminals).cloned().collect()
    }

    #[test]
    fn methods_agree_on_acyclic_epsfree_instances() {
        let mut rng = testgen::rng(900);
        let mut sat = 0;
        let mut unsat = 0;
        for round in 0..40 {
            let grammar = testgen::random_acyclic_epsfree_cfg(&mut rng, 3);
            let word = testgen::random_derivation_word(&mut rng, &grammar, 4)
                .unwrap_or_else(|| testgen::random_word(&mut rng, &grammar, 3));
            let atoms = symbol_atoms(&grammar);
            let refs: Vec<&str> = atoms.iter().map(String::as_str).collect();
            let formula = testgen::random_node_formula(&mut rng, &refs, 7);
            let inst = PfmcInstance { grammar, word, formula };
            let base = solve_enumerate(&inst, 10_000).unwrap();
            assert_ne!(base.verdict, Verdict::Unknown, "round {round}");
            let dtd = solve_acyclic_dtd(&inst).unwrap();
            let rot = solve_epsfree_rotation(&inst).unwrap();
            assert_eq!(base.verdict, dtd.verdict, "round {round}: dtd direct\n{inst:?}");
            assert_eq!(base.verdict, rot.verdict, "round {round}: rotation\n{inst:?}");
            match base.verdict {
                Verdict::Satisfiable => sat += 1,
                _ => unsat += 1,
            }
        }
        assert!(sat >= 5 && unsat >= 5, "skewed sample: {sat} sat / {unsat} unsat");
    }

    #[test]
    fn dtd_route_agrees_with_enumeration_on_epsilon_grammars() {
        let mut rng = testgen::rng(901);
        for round in 0..30 {
            let grammar = testgen::random_acyclic_cfg(&mut rng, 3);
            assert!(check_acyclic(&grammar), "generator broke acyclicity");
            let word = testgen::random_derivation_word(&mut rng, &grammar, 4)
                .unwrap_or_else(|| testgen::random_word(&mut rng, &grammar, 3));
            let atoms = symbol_atoms(&grammar);
            let refs: Vec<&str> = atoms.iter().map(String::as_str).collect();
            let formula = testgen::random_node_formula(&mut rng, &refs, 7);
            let inst = PfmcInstance { grammar, word, formula };
            let base = solve_enumerate(&inst, 10_000).unwrap();
            assert_ne!(base.verdict, Verdict::Unknown, "round {round}");
            let dtd = solve_acyclic_dtd(&inst).unwrap();
            assert_eq!(base.verdict, dtd.verdict, "round {round}\n{inst:?}");
        }
    }

    #[test]
    fn negated_formula_is_satisfiable_when_the_forest_is_nonempty() {
        let mut rng = testgen::rng(902);
        for _ in 0..25 {
            let grammar = testgen::random_acyclic_epsfree_cfg(&mut rng, 3);
            let Some(word) = testgen::random_derivation_word(&mut rng, &grammar, 4) else {
                continue;
            };
            let atoms = symbol_atoms(&grammar);
            let refs: Vec<&str> = atoms.iter().map(String::as_str).collect();
            let formula = testgen::random_node_formula(&mut rng, &refs, 6);
            let pos = PfmcInstance { grammar: grammar.clone(), word: word.clone(), formula: formula.clone() };
            let neg = PfmcInstance { grammar, word, formula: formula.not() };
            let a = solve_enumerate(&pos, 10_000).unwrap().verdict;
            let b = solve_enumerate(&neg, 10_000).unwrap().verdict;
            assert!(
                a == Verdict::Satisfiable || b == Verdict::Satisfiable,
                "both unsatisfiable over a nonempty forest"
            );
        }
    }

    #[test]
    fn witnesses_are_valid_parse_trees_that_satisfy_the_formula() {
        let mut rng = testgen::rng(903);
        let mut seen = 0;
        for _ in 0..30 {
            let grammar = testgen::random_acyclic_cfg(&mut rng, 3);
            let Some(word) = testgen::random_derivation_word(&mut rng, &grammar, 4) else {
                continue;
            };
            let atoms = symbol_atoms(&grammar);
            let refs: Vec<&str> = atoms.iter().map(String::as_str).collect();
            let formula = testgen::random_node_formula(&mut rng, &refs, 6);
            let inst = PfmcInstance { grammar, word, formula };
            let opt = SolveOptions { want_witness: true, ..SolveOptions::default() };
            let ans = solve(&inst, &opt).unwrap();
            if ans.verdict != Verdict::Satisfiable {
                continue;
            }
            seen += 1;
            let t = ans.witness.expect("witness requested");
            let a = trim(&build_forest_automaton(&inst.grammar, &inst.word).unwrap());
            let ctx = EvalCtx::from_cfg(&inst.grammar);
            assert!(accepts_tree(&a, &t));
            assert_eq!(tree_yield(&t), inst.word);
            assert!(model_check(&t, &inst.formula, &ctx).unwrap());
        }
        assert!(seen >= 5, "only {seen} satisfiable rounds");
    }

    #[test]
    fn budget_growth_never_downgrades_a_verdict() {
        let mut rng = testgen::rng(904);
        for _ in 0..20 {
            let grammar = testgen::random_epsfree_cfg(&mut rng, 3);
            let word = testgen::random_derivation_word(&mut rng, &grammar, 3)
                .unwrap_or_else(|| testgen::random_word(&mut rng, &grammar, 2));
            let atoms = symbol_atoms(&grammar);
            let refs: Vec<&str> = atoms.iter().map(String::as_str).collect();
            let formula = testgen::random_node_formula(&mut rng, &refs, 5);
            let inst = PfmcInstance { grammar, word, formula };
            let small = solve_enumerate(&inst, 40).unwrap().verdict;
            let big = solve_enumerate(&inst, 400).unwrap().verdict;
            match small {
                Verdict::Satisfiable => assert_eq!(big, Verdict::Satisfiable),
                Verdict::Unsatisfiable => assert_eq!(big, Verdict::Unsatisfiable),
                Verdict::Unknown => {}
            }
        }
    }

    #[test]
    fn recognition_on_fixed_examples() {
        let ww = w("a b");
        assert!(recognize(&f("true"), &ww, "s").unwrap());
        assert!(!recognize(&f("[down*] !b"), &ww, "s").unwrap());
        assert!(matches!(recognize(&f("true"), &[], "s"), Err(SolveError::EmptyWord)));
    }

    #[test]
    fn recognition_matches_the_bounded_oracle() {
        let mut rng = testgen::rng(905);
        let ap = ["s", "a", "b"];
        for round in 0..12 {
            let len = rng.random_range(1..=3);
            let word: Vec<String> =
                (0..len).map(|_| ap[rng.random_range(0..ap.len())].to_string()).collect();
            let formula = testgen::random_node_formula(&mut rng, &ap, 5);
            let inst = universal_instance(&formula, &word, "s").unwrap();
            let (oracle, _) = oracle_bruteforce(&inst, 6).unwrap();
            let answer = recognize(&formula, &word, "s").unwrap();
            match oracle {
                OracleVerdict::Satisfiable => {
                    assert!(answer, "round {round}: oracle found a witness")
                }
                OracleVerdict::UnsatisfiableWithinBound => {
                    assert!(!answer, "round {round}: oracle exhausted the forest")
                }
                OracleVerdict::Unknown => {}
            }
        }
    }

    #[test]
    fn oracle_bound_semantics_on_the_unit_cycle_grammar() {
        let cyclic = g("axiom S ; S -> S | \"a\" ;");
        let deep = inst(&cyclic, "a", "<down;down;down> a");
        let (v, t) = oracle_bruteforce(&deep, 3).unwrap();
        assert_eq!(v, OracleVerdict::Unknown);
        assert!(t.is_none());
        let (v, t) = oracle_bruteforce(&deep, 4).unwrap();
        assert_eq!(v, OracleVerdict::Satisfiable);
        assert_eq!(t.unwrap().node_count(), 4);

        let finite = g("axiom S ; S -> \"a\" ;");
        let (v, _) = oracle_bruteforce(&inst(&finite, "a", "a"), 9).unwrap();
        assert_eq!(v, OracleVerdict::UnsatisfiableWithinBound);
    }

    #[test]
    fn empty_forests_are_unsatisfiable_on_every_route() {
        let plain = g("axiom S ; S -> \"a\" \"a\" ;");
        let unparseable = inst(&plain, "a", "true");
        assert_eq!(solve_enumerate(&unparseable, 100).unwrap().verdict, Verdict::Unsatisfiable);
        assert_eq!(solve_acyclic_dtd(&unparseable).unwrap().verdict, Verdict::Unsatisfiable);
        assert_eq!(solve_epsfree_rotation(&unparseable).unwrap().verdict, Verdict::Unsatisfiable);
        let a = trim(&build_forest_automaton(&plain, &w("a")).unwrap());
        assert_eq!(count_trees(&a), CountResult::Finite(0));
    }
}
