//! Finite ordered labeled trees, and the parse-forest automaton built from
//! a grammar and an input word: construction, trimming, localization,
//! enumeration, counting, and membership.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::grammar::Cfg;

/// A finite ordered labeled tree. Derived ordering is structural:
/// label first, then children lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tree {
    pub label: String,
    pub children: Vec<Tree>,
}

impl Tree {
    pub fn leaf(label: impl Into<String>) -> Tree {
        Tree { label: label.into(), children: Vec::new() }
    }

    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Tree {
        Tree { label: label.into(), children }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(Tree::node_count).sum::<usize>()
    }

    /// Number of levels; a single node has height 1.
    pub fn height(&self) -> usize {
        1 + self.children.iter().map(Tree::height).max().unwrap_or(0)
    }
}

/// Concatenated leaf labels, left to right; `eps` leaves contribute nothing.
pub fn tree_yield(t: &Tree) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(t: &Tree, out: &mut Vec<String>) {
        if t.is_leaf() {
            if t.label != "eps" {
                out.push(t.label.clone());
            }
        } else {
            for c in &t.children {
                walk(c, out);
            }
        }
    }
    walk(t, &mut out);
    out
}

// ---------------------------------------------------------------------
// Tree text format: s-expressions, leaves printed bare
// ---------------------------------------------------------------------

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_leaf() {
            write!(f, "{}", self.label)
        } else {
            write!(f, "({}", self.label)?;
            for c in &self.children {
                write!(f, " {c}")?;
            }
            write!(f, ")")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("tree text: {0}")]
pub struct TreeTextError(pub String);

/// Parses the s-expression tree format: `(S (VN (v demande)))`, leaves
/// bare. A bare identifier alone is a single-leaf tree.
pub fn parse_tree_text(text: &str) -> Result<Tree, TreeTextError> {
    enum Tok {
        Open,
        Close,
        Ident(String),
    }
    let mut toks = Vec::new();
    let mut it = text.chars().peekable();
    while let Some(&c) = it.peek() {
        match c {
            '(' => {
                it.next();
                toks.push(Tok::Open);
            }
            ')' => {
                it.next();
                toks.push(Tok::Close);
            }
            '#' => {
                for c in it.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            _ if c.is_whitespace() => {
                it.next();
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = it.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '#' {
                        break;
                    }
                    s.push(c);
                    it.next();
                }
                toks.push(Tok::Ident(s));
            }
        }
    }

    fn parse(toks: &[Tok], pos: &mut usize) -> Result<Tree, TreeTextError> {
        match toks.get(*pos) {
            Some(Tok::Ident(s)) => {
                *pos += 1;
                Ok(Tree::leaf(s.clone()))
            }
            Some(Tok::Open) => {
                *pos += 1;
                let label = match toks.get(*pos) {
                    Some(Tok::Ident(s)) => {
                        *pos += 1;
                        s.clone()
                    }
                    _ => return Err(TreeTextError("expected a label after `(`".into())),
                };
                let mut children = Vec::new();
                loop {
                    match toks.get(*pos) {
                        Some(Tok::Close) => {
                            *pos += 1;
                            return Ok(Tree::node(label, children));
                        }
                        Some(_) => children.push(parse(toks, pos)?),
                        None => return Err(TreeTextError("missing `)`".into())),
                    }
                }
            }
            Some(Tok::Close) => Err(TreeTextError("unexpected `)`".into())),
            None => Err(TreeTextError("empty tree text".into())),
        }
    }

    let mut pos = 0;
    let t = parse(&toks, &mut pos)?;
    if pos != toks.len() {
        return Err(TreeTextError("trailing input after the tree".into()));
    }
    Ok(t)
}

// ---------------------------------------------------------------------
// Parse-forest automaton
// ---------------------------------------------------------------------

/// A cut-indexed state `(i, sym, j)`: `sym` spans tokens i..j of the word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ForestState {
    pub i: usize,
    pub sym: String,
    pub j: usize,
}

impl ForestState {
    /// Rendering used by localization and the tree-shaped reductions;
    /// the numeric ends make it unambiguous even when `sym` contains `_`.
    pub fn localized_label(&self) -> String {
        format!("{}_{}_{}", self.i, self.sym, self.j)
    }
}

impl fmt::Display for ForestState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.i, self.sym, self.j)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestRule {
    pub lhs: usize,
    pub label: String,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Plain,
    Trimmed,
    Localized,
}

/// A finite tree automaton presented top-down: `rules` rewrite a state
/// into a labeled node over child states. Its language is a parse forest.
#[derive(Debug, Clone)]
pub struct ForestAutomaton {
    pub states: Vec<ForestState>,
    pub alphabet: BTreeSet<String>,
    pub rules: Vec<ForestRule>,
    /// `None` once trimming discovers the language is empty.
    pub initial: Option<usize>,
    pub flavor: Flavor,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForestError {
    #[error("unknown terminal token `{0}`")]
    UnknownToken(String),
}

impl ForestAutomaton {
    pub fn rules_of(&self, q: usize) -> impl Iterator<Item = &ForestRule> {
        self.rules.iter().filter(move |r| r.lhs == q)
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }
}

struct StateInterner {
    states: Vec<ForestState>,
    index: HashMap<ForestState, usize>,
}

impl StateInterner {
    fn new() -> Self {
        StateInterner { states: Vec::new(), index: HashMap::new() }
    }
    fn intern(&mut self, i: usize, sym: &str, j: usize) -> usize {
        let st = ForestState { i, sym: sym.to_string(), j };
        if let Some(&k) = self.index.get(&st) {
            return k;
        }
        let k = self.states.len();
        self.states.push(st.clone());
        self.index.insert(st, k);
        k
    }
}

/// The product of grammar and word: states `(i,X,j)`, one rule per
/// production and per weakly increasing cut sequence, token rules
/// `(i, a, i+1) → a()`, and `(i,A,i) → A((i,eps,i))` for each A → ε.
/// The language is exactly the set of parse trees of `w` under `g`
/// (after trimming; the raw automaton contains useless states).
pub fn build_forest_automaton(g: &Cfg, w: &[String]) -> Result<ForestAutomaton, ForestError> {
    let n = w.len();
    let mut interner = StateInterner::new();
    let mut rules = Vec::new();

    for (i, tok) in w.iter().enumerate() {
        if !g.terminals.contains(tok) {
            return Err(ForestError::UnknownToken(tok.clone()));
        }
        let q = interner.intern(i, tok, i + 1);
        rules.push(ForestRule { lhs: q, label: tok.clone(), children: vec![] });
    }

    if g.productions.iter().any(|p| p.rhs.is_empty()) {
        for i in 0..=n {
            let q = interner.intern(i, "eps", i);
            rules.push(ForestRule { lhs: q, label: "eps".into(), children: vec![] });
        }
    }

    // recursive enumeration of weakly increasing cut sequences; terminal
    // symbols pin their cut to the matching token
    fn cuts(
        g: &Cfg,
        w: &[String],
        rhs: &[String],
        here: usize,
        children: &mut Vec<usize>,
        interner: &mut StateInterner,
        sink: &mut dyn FnMut(&mut StateInterner, usize, &[usize]),
    ) {
        match rhs.split_first() {
            None => sink(interner, here, children),
            Some((sym, rest)) => {
                if g.terminals.contains(sym) {
                    if here < w.len() && &w[here] == sym {
                        children.push(interner.intern(here, sym, here + 1));
                        cuts(g, w, rest, here + 1, children, interner, sink);
                        children.pop();
                    }
                } else {
                    for j in here..=w.len() {
                        children.push(interner.intern(here, sym, j));
                        cuts(g, w, rest, j, children, interner, sink);
                        children.pop();
                    }
                }
            }
        }
    }

    for p in &g.productions {
        if p.rhs.is_empty() {
            for i in 0..=n {
                let lhs = interner.intern(i, &p.lhs, i);
                let eps = interner.intern(i, "eps", i);
                rules.push(ForestRule { lhs, label: p.lhs.clone(), children: vec![eps] });
            }
            continue;
        }
        for i0 in 0..=n {
            let mut children = Vec::new();
            let mut sink = |interner: &mut StateInterner, end: usize, kids: &[usize]| {
                let lhs = interner.intern(i0, &p.lhs, end);
                rules.push(ForestRule { lhs, label: p.lhs.clone(), children: kids.to_vec() });
            };
            cuts(g, w, &p.rhs, i0, &mut children, &mut interner, &mut sink);
        }
    }

    let initial = interner.intern(0, &g.axiom, n);
    // duplicate grammar productions would otherwise duplicate rules and
    // inflate tree counts
    let mut seen = HashSet::new();
    rules.retain(|r| seen.insert((r.lhs, r.children.clone())));
    let alphabet = rules.iter().map(|r| r.label.clone()).collect();
    Ok(ForestAutomaton {
        states: interner.states,
        alphabet,
        rules,
        initial: Some(initial),
        flavor: Flavor::Plain,
    })
}

/// Keeps only states that are productive (derive some finite tree) and
/// reachable from the initial state; the tree language is unchanged.
pub fn trim(a: &ForestAutomaton) -> ForestAutomaton {
    let n = a.states.len();

    // productive: fixpoint over rules whose children are all productive
    let mut productive = vec![false; n];
    let mut changed = true;
    while changed {
        changed = false;
        for r in &a.rules {
            if !productive[r.lhs] && r.children.iter().all(|&c| productive[c]) {
                productive[r.lhs] = true;
                changed = true;
            }
        }
    }

    // reachable: descend from the initial state through productive rules
    let mut reachable = vec![false; n];
    let mut stack = Vec::new();
    if let Some(q0) = a.initial {
        if productive[q0] {
            reachable[q0] = true;
            stack.push(q0);
        }
    }
    while let Some(q) = stack.pop() {
        for r in a.rules.iter().filter(|r| r.lhs == q) {
            if r.children.iter().all(|&c| productive[c]) {
                for &c in &r.children {
                    if !reachable[c] {
                        reachable[c] = true;
                        stack.push(c);
                    }
                }
            }
        }
    }

    let keep: Vec<bool> = (0..n).map(|q| productive[q] && reachable[q]).collect();
    let mut remap = vec![usize::MAX; n];
    let mut states = Vec::new();
    for q in 0..n {
        if keep[q] {
            remap[q] = states.len();
            states.push(a.states[q].clone());
        }
    }
    let rules: Vec<ForestRule> = a
        .rules
        .iter()
        .filter(|r| keep[r.lhs] && r.children.iter().all(|&c| keep[c]))
        .map(|r| ForestRule {
            lhs: remap[r.lhs],
            label: r.label.clone(),
            children: r.children.iter().map(|&c| remap[c]).collect(),
        })
        .collect();
    let alphabet = rules.iter().map(|r| r.label.clone()).collect();
    let initial = a.initial.filter(|&q0| keep[q0]).map(|q0| remap[q0]);
    ForestAutomaton { states, alphabet, rules, initial, flavor: Flavor::Trimmed }
}

/// Relabels every rule with its own left-hand state, so distinct spans of
/// the same symbol become distinct node labels.
pub fn localize(a: &ForestAutomaton) -> ForestAutomaton {
    let rules: Vec<ForestRule> = a
        .rules
        .iter()
        .map(|r| ForestRule {
            lhs: r.lhs,
            label: a.states[r.lhs].localized_label(),
            children: r.children.clone(),
        })
        .collect();
    let alphabet = rules.iter().map(|r| r.label.clone()).collect();
    ForestAutomaton {
        states: a.states.clone(),
        alphabet,
        rules,
        initial: a.initial,
        flavor: Flavor::Localized,
    }
}

/// Exact tree-language cardinality, or `Infinite` when the (trimmed) rule
/// graph has a cycle, which always pumps to infinitely many trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountResult {
    Finite(u128),
    Infinite,
}

impl fmt::Display for CountResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountResult::Finite(k) => write!(f, "{k}"),
            CountResult::Infinite => write!(f, "infinite"),
        }
    }
}

pub(crate) fn state_cycle(a: &ForestAutomaton) -> bool {
    // iterative 3-color DFS over the state graph induced by the rules
    let n = a.states.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in &a.rules {
        succ[r.lhs].extend(r.children.iter().copied());
    }
    let mut color = vec![0u8; n];
    for start in 0..n {
        if color[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start] = 1;
        while let Some(&mut (q, ref mut next)) = stack.last_mut() {
            if *next < succ[q].len() {
                let c = succ[q][*next];
                *next += 1;
                match color[c] {
                    0 => {
                        color[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => return true,
                    _ => {}
                }
            } else {
                color[q] = 2;
                stack.pop();
            }
        }
    }
    false
}

/// Counts `L(a)` by dynamic programming over the acyclic state graph;
/// pre: `a` is trimmed, so a cycle means the language is infinite.
pub fn count_trees(a: &ForestAutomaton) -> CountResult {
    let Some(q0) = a.initial else { return CountResult::Finite(0) };
    if state_cycle(a) {
        return CountResult::Infinite;
    }
    let n = a.states.len();
    let mut memo: Vec<Option<u128>> = vec![None; n];
    fn count(q: usize, a: &ForestAutomaton, memo: &mut Vec<Option<u128>>) -> u128 {
        if let Some(c) = memo[q] {
            return c;
        }
        let mut total: u128 = 0;
        for r in a.rules.iter().filter(|r| r.lhs == q) {
            let mut prod: u128 = 1;
            for &c in &r.children {
                prod = prod.saturating_mul(count(c, a, memo));
            }
            total = total.saturating_add(prod);
        }
        memo[q] = Some(total);
        total
    }
    CountResult::Finite(count(q0, a, &mut memo))
}

/// One item of an enumeration stream; `Truncated` is the in-band marker
/// that the budget cut the stream short.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Enumerated {
    Tree(Tree),
    Truncated,
}

/// Stream over the tree language in (node count, structural) order.
/// Layers are produced on demand, so a consumer that stops early never
/// pays for the rest of the budget.
pub struct TreeStream<'a> {
    a: &'a ForestAutomaton,
    q0: Option<usize>,
    memo: HashMap<(usize, usize), Rc<Vec<Tree>>>,
    layer: Rc<Vec<Tree>>,
    idx: usize,
    size: usize,
    max_size: Option<usize>,
    emitted: usize,
    budget: usize,
    finished: bool,
}

impl TreeStream<'_> {
    /// True when at least one tree beyond the emitted prefix exists.
    fn more_exist(&mut self, q0: usize) -> bool {
        if self.idx < self.layer.len() {
            return true;
        }
        // a trimmed cyclic automaton has trees of unboundedly many sizes
        let Some(m) = self.max_size else { return true };
        let cap = self.budget.saturating_add(1);
        for s in self.size + 1..=m {
            if !trees_of(self.a, q0, s, cap, &mut self.memo).is_empty() {
                return true;
            }
        }
        false
    }
}

impl Iterator for TreeStream<'_> {
    type Item = Enumerated;
    fn next(&mut self) -> Option<Enumerated> {
        if self.finished {
            return None;
        }
        let Some(q0) = self.q0 else {
            self.finished = true;
            return None;
        };
        loop {
            if self.emitted == self.budget {
                self.finished = true;
                return self.more_exist(q0).then_some(Enumerated::Truncated);
            }
            if self.idx < self.layer.len() {
                let t = self.layer[self.idx].clone();
                self.idx += 1;
                self.emitted += 1;
                return Some(Enumerated::Tree(t));
            }
            self.size += 1;
            if let Some(m) = self.max_size {
                if self.size > m {
                    self.finished = true;
                    return None;
                }
            }
            let cap = self.budget.saturating_add(1);
            self.layer = trees_of(self.a, q0, self.size, cap, &mut self.memo);
            self.idx = 0;
        }
    }
}

/// Enumerates distinct trees of `L(a)` ordered by node count and then by
/// structural order, up to `budget` trees; a trailing [`Enumerated::Truncated`]
/// marks an incomplete enumeration. Within a size layer that overflows the
/// budget the emitted prefix may not be the structurally least one.
/// Pre: `a` is trimmed.
pub fn enumerate_trees(a: &ForestAutomaton, budget: usize) -> TreeStream<'_> {
    // for acyclic automata the largest derivable tree bounds the layers
    let max_size: Option<usize> = match a.initial {
        Some(q0) if !state_cycle(a) => {
            let n = a.states.len();
            let mut memo: Vec<Option<usize>> = vec![None; n];
            fn biggest(q: usize, a: &ForestAutomaton, memo: &mut Vec<Option<usize>>) -> usize {
                if let Some(s) = memo[q] {
                    return s;
                }
                let mut best = 0;
                for r in a.rules.iter().filter(|r| r.lhs == q) {
                    let s =
                        1 + r.children.iter().map(|&c| biggest(c, a, memo)).sum::<usize>();
                    best = best.max(s);
                }
                memo[q] = Some(best);
                best
            }
            Some(biggest(q0, a, &mut memo))
        }
        _ => None,
    };
    TreeStream {
        a,
        q0: a.initial,
        memo: HashMap::new(),
        layer: Rc::new(Vec::new()),
        idx: 0,
        size: 0,
        max_size,
        emitted: 0,
        budget,
        finished: false,
    }
}

/// Convenience collector: the enumerated trees and whether they were cut
/// short by the budget.
pub fn collect_trees(a: &ForestAutomaton, budget: usize) -> (Vec<Tree>, bool) {
    let mut trees = Vec::new();
    let mut truncated = false;
    for item in enumerate_trees(a, budget) {
        match item {
            Enumerated::Tree(t) => trees.push(t),
            Enumerated::Truncated => truncated = true,
        }
    }
    (trees, truncated)
}

/// Every tree of `L(a)` with at most `max_size` nodes, in the enumeration
/// order, without a tree-count cap. The flag reports whether the language
/// holds further trees above the size bound.
/// Pre: `a` is trimmed.
pub fn collect_trees_up_to(a: &ForestAutomaton, max_size: usize) -> (Vec<Tree>, bool) {
    let Some(q0) = a.initial else {
        return (Vec::new(), false);
    };
    let mut memo: HashMap<(usize, usize), Rc<Vec<Tree>>> = HashMap::new();
    let mut out = Vec::new();
    for size in 1..=max_size {
        out.extend(trees_of(a, q0, size, usize::MAX, &mut memo).iter().cloned());
    }
    let more = match count_trees(a) {
        CountResult::Infinite => true,
        CountResult::Finite(c) => (out.len() as u128) < c,
    };
    (out, more)
}

/// All ways to write `total` as `m` positive parts, in order.
fn compositions(total: usize, m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if m == 1 {
        return if total >= 1 { vec![vec![total]] } else { vec![] };
    }
    let mut out = Vec::new();
    if total < m {
        return out;
    }
    for first in 1..=(total - (m - 1)) {
        for rest in compositions(total - first, m - 1) {
            let mut v = Vec::with_capacity(m);
            v.push(first);
            v.extend(rest);
            out.push(v);
        }
    }
    out
}

fn trees_of(
    a: &ForestAutomaton,
    q: usize,
    size: usize,
    cap: usize,
    memo: &mut HashMap<(usize, usize), Rc<Vec<Tree>>>,
) -> Rc<Vec<Tree>> {
    if let Some(v) = memo.get(&(q, size)) {
        return v.clone();
    }
    let mut set: BTreeSet<Tree> = BTreeSet::new();
    'rules: for r in a.rules.iter().filter(|r| r.lhs == q) {
        if r.children.is_empty() {
            if size == 1 {
                set.insert(Tree::leaf(r.label.clone()));
                if set.len() >= cap {
                    break 'rules;
                }
            }
            continue;
        }
        let m = r.children.len();
        if size < m + 1 {
            continue;
        }
        for parts in compositions(size - 1, m) {
            let lists: Vec<Rc<Vec<Tree>>> = r
                .children
                .iter()
                .zip(&parts)
                .map(|(&c, &k)| trees_of(a, c, k, cap, memo))
                .collect();
            if lists.iter().any(|l| l.is_empty()) {
                continue;
            }
            let mut pick = vec![0usize; m];
            'pick: loop {
                let kids: Vec<Tree> =
                    pick.iter().zip(&lists).map(|(&i, l)| l[i].clone()).collect();
                set.insert(Tree::node(r.label.clone(), kids));
                if set.len() >= cap {
                    break 'rules;
                }
                for d in (0..m).rev() {
                    pick[d] += 1;
                    if pick[d] < lists[d].len() {
                        continue 'pick;
                    }
                    pick[d] = 0;
                }
                break;
            }
        }
    }
    let v = Rc::new(set.into_iter().collect::<Vec<Tree>>());
    memo.insert((q, size), v.clone());
    v
}

/// Bottom-up membership: does some run of `a` accept `t` from the initial
/// state?
pub fn accepts_tree(a: &ForestAutomaton, t: &Tree) -> bool {
    let Some(q0) = a.initial else { return false };
    fn states_for(a: &ForestAutomaton, t: &Tree) -> HashSet<usize> {
        let child_sets: Vec<HashSet<usize>> =
            t.children.iter().map(|c| states_for(a, c)).collect();
        let mut out = HashSet::new();
        for r in &a.rules {
            if r.label != t.label || r.children.len() != child_sets.len() {
                continue;
            }
            if r.children.iter().zip(&child_sets).all(|(&c, set)| set.contains(&c)) {
                out.insert(r.lhs);
            }
        }
        out
    }
    states_for(a, t).contains(&q0)
}

/// Replaces localized labels by the underlying grammar symbol, the inverse
/// of [`localize`]'s relabeling, using the automaton's state table.
pub fn delocalize_tree(a: &ForestAutomaton, t: &Tree) -> Tree {
    let by_label: BTreeMap<String, &ForestState> =
        a.states.iter().map(|s| (s.localized_label(), s)).collect();
    fn walk(t: &Tree, by_label: &BTreeMap<String, &ForestState>) -> Tree {
        let label = match by_label.get(&t.label) {
            Some(s) => s.sym.clone(),
            None => t.label.clone(),
        };
        Tree { label, children: t.children.iter().map(|c| walk(c, by_label)).collect() }
    }
    walk(t, &by_label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar_text;

    fn tokens(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn dangling() -> Cfg {
        parse_grammar_text(include_str!("../../../fixtures/dangling_else.cfg")).unwrap()
    }

    const DANGLING_WORD: &str = "if true then if true then skip else skip";

    #[test]
    fn tree_text_round_trip() {
        let texts = ["a", "(S (VN (v demande)))", "(A eps)", "(a (b c d) e)"];
        for text in texts {
            let t = parse_tree_text(text).unwrap();
            assert_eq!(parse_tree_text(&t.to_string()).unwrap(), t);
        }
        assert_eq!(parse_tree_text("(a)").unwrap(), Tree::leaf("a"));
        assert!(parse_tree_text("(a").is_err());
        assert!(parse_tree_text("a b").is_err());
        assert!(parse_tree_text("").is_err());
    }

    #[test]
    fn yields_skip_eps() {
        let t = parse_tree_text("(S (A eps) (B b) (C (D eps) c))").unwrap();
        assert_eq!(tree_yield(&t), tokens("b c"));
        assert_eq!(tree_yield(&Tree::leaf("eps")), Vec::<String>::new());
    }

    #[test]
    fn dangling_else_has_two_parses() {
        let g = dangling();
        let a = trim(&build_forest_automaton(&g, &tokens(DANGLING_WORD)).unwrap());
        assert_eq!(count_trees(&a), CountResult::Finite(2));
        let (trees, truncated) = collect_trees(&a, 100);
        assert!(!truncated);
        let fig3a = parse_tree_text(
            "(S (st if (C (ct true)) then (S (se if (C (ct true)) then (S (ss skip)) else (S (ss skip))))))",
        )
        .unwrap();
        let fig3b = parse_tree_text(
            "(S (se if (C (ct true)) then (S (st if (C (ct true)) then (S (ss skip)))) else (S (ss skip))))",
        )
        .unwrap();
        // both parses have 21 nodes; structural order puts the se-rooted one first
        assert_eq!(trees, vec![fig3b.clone(), fig3a.clone()]);
        assert!(accepts_tree(&a, &fig3a));
        assert!(accepts_tree(&a, &fig3b));
        let mangled = parse_tree_text(
            "(S (st if (C (ct true)) else (S (se if (C (ct true)) then (S (ss skip)) then (S (ss skip))))))",
        )
        .unwrap();
        assert!(!accepts_tree(&a, &mangled));
        for t in &trees {
            assert_eq!(tree_yield(t), tokens(DANGLING_WORD));
        }
    }

    #[test]
    fn unparseable_input_gives_empty_language() {
        let g = dangling();
        let a = trim(&build_forest_automaton(&g, &tokens("else")).unwrap());
        assert_eq!(count_trees(&a), CountResult::Finite(0));
        assert!(a.initial.is_none());
        assert_eq!(collect_trees(&a, 10).0, Vec::<Tree>::new());
        assert!(build_forest_automaton(&g, &tokens("zzz")).is_err());
    }

    #[test]
    fn trim_is_idempotent_and_count_preserving() {
        let g = dangling();
        for word in ["if true then skip", DANGLING_WORD, "while false skip"] {
            let raw = build_forest_automaton(&g, &tokens(word)).unwrap();
            let t1 = trim(&raw);
            let t2 = trim(&t1);
            assert_eq!(t1.states.len(), t2.states.len());
            assert_eq!(t1.rules.len(), t2.rules.len());
            assert_eq!(count_trees(&t1), count_trees(&t2));
        }
    }

    #[test]
    fn comb_grammar_counts_eight_trees_of_nine_nodes() {
        let g = parse_grammar_text(crate::grammar::APP_B_3SAT).unwrap();
        let a = trim(&build_forest_automaton(&g, &tokens("a a a")).unwrap());
        assert_eq!(count_trees(&a), CountResult::Finite(8));
        let (trees, truncated) = collect_trees(&a, 50);
        assert!(!truncated);
        assert_eq!(trees.len(), 8);
        // |N|(|w|-1)+|w| = 3·2+3 = 9, attained by every tree here
        for t in &trees {
            assert_eq!(t.node_count(), 9);
        }
    }

    #[test]
    fn unit_cycle_counts_infinite_and_enumerates_by_size() {
        let g = parse_grammar_text("axiom S ; S -> S | \"a\" ;").unwrap();
        let a = trim(&build_forest_automaton(&g, &tokens("a")).unwrap());
        assert_eq!(count_trees(&a), CountResult::Infinite);
        let mut stream = enumerate_trees(&a, 3);
        assert_eq!(
            stream.next(),
            Some(Enumerated::Tree(parse_tree_text("(S a)").unwrap()))
        );
        assert_eq!(
            stream.next(),
            Some(Enumerated::Tree(parse_tree_text("(S (S a))").unwrap()))
        );
        assert_eq!(
            stream.next(),
            Some(Enumerated::Tree(parse_tree_text("(S (S (S a)))").unwrap()))
        );
        assert_eq!(stream.next(), Some(Enumerated::Truncated));
        assert_eq!(stream.next(), None);
    }

    #[test]
    fn epsilon_productions_parse_the_empty_span() {
        let g = parse_grammar_text("axiom S ; S -> A \"b\" ; A -> ; A -> \"a\" ;").unwrap();
        let a = trim(&build_forest_automaton(&g, &tokens("b")).unwrap());
        assert_eq!(count_trees(&a), CountResult::Finite(1));
        let (trees, _) = collect_trees(&a, 10);
        assert_eq!(trees, vec![parse_tree_text("(S (A eps) b)").unwrap()]);
        assert_eq!(tree_yield(&trees[0]), tokens("b"));
    }

    #[test]
    fn localization_relabels_with_state_triples() {
        let g = parse_grammar_text("axiom S ; S -> \"a\" S | \"a\" ;").unwrap();
        let a = trim(&build_forest_automaton(&g, &tokens("a a")).unwrap());
        let l = localize(&a);
        assert_eq!(l.flavor, Flavor::Localized);
        let (trees, _) = collect_trees(&l, 10);
        assert_eq!(trees.len(), 1);
        assert_eq!(
            trees[0],
            parse_tree_text("(0_S_2 0_a_1 (1_S_2 1_a_2))").unwrap()
        );
        // de-localization restores the original parse
        let (orig, _) = collect_trees(&a, 10);
        assert_eq!(delocalize_tree(&l, &trees[0]), orig[0]);
        assert_eq!(tree_yield(&delocalize_tree(&l, &trees[0])), tokens("a a"));
    }

    #[test]
    fn enumeration_matches_membership() {
        let g = dangling();
        for word in ["if true then skip", DANGLING_WORD, "skip"] {
            let a = trim(&build_forest_automaton(&g, &tokens(word)).unwrap());
            let (trees, truncated) = collect_trees(&a, 200);
            assert!(!truncated);
            for t in &trees {
                assert!(accepts_tree(&a, t));
            }
            match count_trees(&a) {
                CountResult::Finite(k) => assert_eq!(k as usize, trees.len()),
                CountResult::Infinite => panic!("acyclic grammar counted infinite"),
            }
        }
    }
}
