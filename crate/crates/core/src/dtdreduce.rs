//! Reductions from parse forests to document type definitions.
//!
//! A DTD here is a non-recursive regular tree grammar: every nonterminal's
//! children must spell a word of its content-model NFA, and no nonterminal
//! can reappear below itself, so all trees have depth at most the number of
//! nonterminals. Two routes produce such a DTD from a parse forest:
//!
//! * [`dtd_from_acyclic`] copies an acyclic forest automaton state by state;
//! * [`rotate_epsfree`] handles cyclic but epsilon-free forests by folding
//!   unit-rule chains into sibling runs, trading unbounded depth for
//!   unbounded width.
//!
//! Both return an interpretation that rewrites formulas over the original
//! vocabulary into formulas over the new labels, and the rotation also
//! rewrites the path steps so that model checking commutes with
//! [`rotate_tree`].

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::rc::Rc;

use thiserror::Error;

use crate::forest::{state_cycle, CountResult, Flavor, ForestAutomaton, Tree};
use crate::pdl::{or_all, Axis, EvalCtx, NodeF, NodeFormula, PathF, PathFormula};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DtdError {
    #[error("recursive input automaton")]
    RecursiveInput,
    #[error("automaton is not binarized: a rule for `{0}` has {1} children")]
    NotBinarized(String, usize),
    #[error("automaton is not epsilon-free: state `{0}` derives the empty word")]
    NotEpsilonFree(String),
    #[error("automaton must be trimmed first")]
    NotTrimmed,
    #[error("automaton must be localized first")]
    NotLocalized,
    #[error("automaton accepts no tree")]
    EmptyForest,
    #[error("no interpretation for atom `{0}`")]
    MissingInterpretation(String),
    #[error("tree is not accepted by the forest automaton: {0}")]
    NotInForest(String),
}

// ---------------------------------------------------------------------------
// Word automata for content models

/// Nondeterministic finite word automaton over string letters. Content
/// models keep their NFA form throughout; nothing here determinizes.
#[derive(Debug, Clone)]
pub struct Nfa {
    pub states: Vec<String>,
    pub alphabet: BTreeSet<String>,
    /// `(from, letter, to)` triples.
    pub transitions: Vec<(usize, String, usize)>,
    pub initial: BTreeSet<usize>,
    pub finals: BTreeSet<usize>,
}

impl Nfa {
    /// The automaton with no states: accepts nothing.
    pub fn empty_language() -> Nfa {
        Nfa {
            states: Vec::new(),
            alphabet: BTreeSet::new(),
            transitions: Vec::new(),
            initial: BTreeSet::new(),
            finals: BTreeSet::new(),
        }
    }

    /// Accepts exactly the empty word.
    pub fn epsilon() -> Nfa {
        Nfa {
            states: vec!["e".to_string()],
            alphabet: BTreeSet::new(),
            transitions: Vec::new(),
            initial: BTreeSet::from([0]),
            finals: BTreeSet::from([0]),
        }
    }

    /// Accepts exactly the given word.
    pub fn word(letters: &[String]) -> Nfa {
        let states = (0..=letters.len()).map(|i| format!("w{i}")).collect();
        let transitions = letters
            .iter()
            .enumerate()
            .map(|(i, l)| (i, l.clone(), i + 1))
            .collect();
        Nfa {
            states,
            alphabet: letters.iter().cloned().collect(),
            transitions,
            initial: BTreeSet::from([0]),
            finals: BTreeSet::from([letters.len()]),
        }
    }

    pub fn accepts_empty_word(&self) -> bool {
        self.initial.intersection(&self.finals).next().is_some()
    }

    /// Disjoint union: accepts the union of both languages.
    pub fn union(a: &Nfa, b: &Nfa) -> Nfa {
        let off = a.states.len();
        let mut out = a.clone();
        out.states.extend(b.states.iter().cloned());
        out.alphabet.extend(b.alphabet.iter().cloned());
        out.transitions
            .extend(b.transitions.iter().map(|(p, l, q)| (p + off, l.clone(), q + off)));
        out.initial.extend(b.initial.iter().map(|&q| q + off));
        out.finals.extend(b.finals.iter().map(|&q| q + off));
        out
    }

    /// Concatenation without epsilon transitions: finals of `a` borrow the
    /// outgoing edges of `b`'s initial states.
    pub fn concat(a: &Nfa, b: &Nfa) -> Nfa {
        let off = a.states.len();
        let mut out = Nfa {
            states: a.states.iter().chain(b.states.iter()).cloned().collect(),
            alphabet: a.alphabet.union(&b.alphabet).cloned().collect(),
            transitions: a.transitions.clone(),
            initial: a.initial.clone(),
            finals: b.finals.iter().map(|&q| q + off).collect(),
        };
        out.transitions
            .extend(b.transitions.iter().map(|(p, l, q)| (p + off, l.clone(), q + off)));
        for (p, l, q) in &b.transitions {
            if b.initial.contains(p) {
                for &f in &a.finals {
                    out.transitions.push((f, l.clone(), q + off));
                }
            }
        }
        if a.accepts_empty_word() {
            out.initial.extend(b.initial.iter().map(|&q| q + off));
        }
        if b.accepts_empty_word() {
            out.finals.extend(a.finals.iter().copied());
        }
        out
    }

    pub fn accepts<S: AsRef<str>>(&self, word: &[S]) -> bool {
        let mut cur: BTreeSet<usize> = self.initial.clone();
        for letter in word {
            let letter = letter.as_ref();
            let mut next = BTreeSet::new();
            for (p, l, q) in &self.transitions {
                if cur.contains(p) && l == letter {
                    next.insert(*q);
                }
            }
            cur = next;
            if cur.is_empty() {
                return false;
            }
        }
        cur.intersection(&self.finals).next().is_some()
    }

    fn forward_reachable(&self, allowed: Option<&BTreeSet<String>>) -> Vec<bool> {
        let mut seen = vec![false; self.states.len()];
        let mut queue: VecDeque<usize> = self.initial.iter().copied().collect();
        for &q in &self.initial {
            seen[q] = true;
        }
        while let Some(p) = queue.pop_front() {
            for (from, l, to) in &self.transitions {
                if *from == p && !seen[*to] && allowed.is_none_or(|set| set.contains(l)) {
                    seen[*to] = true;
                    queue.push_back(*to);
                }
            }
        }
        seen
    }

    fn backward_reachable(&self, allowed: Option<&BTreeSet<String>>) -> Vec<bool> {
        let mut seen = vec![false; self.states.len()];
        let mut queue: VecDeque<usize> = self.finals.iter().copied().collect();
        for &q in &self.finals {
            seen[q] = true;
        }
        while let Some(p) = queue.pop_front() {
            for (from, l, to) in &self.transitions {
                if *to == p && !seen[*from] && allowed.is_none_or(|set| set.contains(l)) {
                    seen[*from] = true;
                    queue.push_back(*from);
                }
            }
        }
        seen
    }

    /// Transitions lying on some accepting path, optionally restricted to a
    /// letter subset.
    fn useful_transitions(&self, allowed: Option<&BTreeSet<String>>) -> Vec<(usize, String, usize)> {
        let fwd = self.forward_reachable(allowed);
        let bwd = self.backward_reachable(allowed);
        self.transitions
            .iter()
            .filter(|(p, l, q)| fwd[*p] && bwd[*q] && allowed.is_none_or(|set| set.contains(l)))
            .cloned()
            .collect()
    }

    /// Letters that occur in some accepted word.
    pub fn useful_letters(&self) -> BTreeSet<String> {
        self.useful_transitions(None).into_iter().map(|(_, l, _)| l).collect()
    }

    pub fn is_language_empty(&self) -> bool {
        let fwd = self.forward_reachable(None);
        !self.finals.iter().any(|&q| fwd[q])
    }

    /// True when membership restricted to `allowed` letters is nonempty.
    fn accepts_some_word_over(&self, allowed: &BTreeSet<String>) -> bool {
        let fwd = self.forward_reachable(Some(allowed));
        self.finals.iter().any(|&q| fwd[q])
    }

    /// A finite language means no cycle survives on accepting paths.
    pub fn has_finite_language(&self) -> bool {
        !has_cycle(self.states.len(), &self.useful_transitions(None))
    }
}

/// Cycle test over `(from, _, to)` edges by iterative three-color DFS.
fn has_cycle(n: usize, edges: &[(usize, String, usize)]) -> bool {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (p, _, q) in edges {
        adj[*p].push(*q);
    }
    let mut color = vec![0u8; n];
    for start in 0..n {
        if color[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                match color[w] {
                    0 => {
                        color[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => return true,
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Regex rendering, informational only

enum Rx {
    Empty,
    Eps,
    Letter(String),
    Seq(Box<Rx>, Box<Rx>),
    Alt(Box<Rx>, Box<Rx>),
    Star(Box<Rx>),
}

impl Rx {
    fn seq(a: Rx, b: Rx) -> Rx {
        match (a, b) {
            (Rx::Empty, _) | (_, Rx::Empty) => Rx::Empty,
            (Rx::Eps, x) | (x, Rx::Eps) => x,
            (a, b) => Rx::Seq(Box::new(a), Box::new(b)),
        }
    }

    fn alt(a: Rx, b: Rx) -> Rx {
        match (a, b) {
            (Rx::Empty, x) | (x, Rx::Empty) => x,
            (a, b) => Rx::Alt(Box::new(a), Box::new(b)),
        }
    }

    fn star(a: Rx) -> Rx {
        match a {
            Rx::Empty | Rx::Eps => Rx::Eps,
            a => Rx::Star(Box::new(a)),
        }
    }

    fn render(&self, out: &mut String, prec: u8) {
        let my = match self {
            Rx::Alt(..) => 1,
            Rx::Seq(..) => 2,
            _ => 3,
        };
        if my < prec {
            out.push('(');
        }
        match self {
            Rx::Empty => out.push_str("empty"),
            Rx::Eps => out.push_str("eps"),
            Rx::Letter(l) => out.push_str(l),
            Rx::Seq(a, b) => {
                a.render(out, 2);
                out.push(' ');
                b.render(out, 2);
            }
            Rx::Alt(a, b) => {
                a.render(out, 1);
                out.push_str(" | ");
                b.render(out, 1);
            }
            Rx::Star(a) => {
                a.render(out, 4);
                out.push('*');
            }
        }
        if my < prec {
            out.push(')');
        }
    }
}

/// State-elimination rendering of an NFA as a regular expression string.
pub fn nfa_to_regex(n: &Nfa) -> String {
    // generalized automaton: fresh source and sink around the NFA states
    let k = n.states.len();
    let (src, snk) = (k, k + 1);
    let mut edges: HashMap<(usize, usize), Rx> = HashMap::new();
    let add = |edges: &mut HashMap<(usize, usize), Rx>, from: usize, to: usize, rx: Rx| {
        let slot = edges.remove(&(from, to)).unwrap_or(Rx::Empty);
        edges.insert((from, to), Rx::alt(slot, rx));
    };
    for &q in &n.initial {
        add(&mut edges, src, q, Rx::Eps);
    }
    for &q in &n.finals {
        add(&mut edges, q, snk, Rx::Eps);
    }
    for (p, l, q) in &n.transitions {
        add(&mut edges, *p, *q, Rx::Letter(l.clone()));
    }
    for rip in 0..k {
        let own = edges.remove(&(rip, rip)).unwrap_or(Rx::Empty);
        let own = Rx::star(own);
        let ins: Vec<(usize, Rx)> = {
            let keys: Vec<(usize, usize)> =
                edges.keys().filter(|(_, t)| *t == rip).copied().collect();
            keys.into_iter().map(|key| (key.0, edges.remove(&key).unwrap())).collect()
        };
        let outs: Vec<(usize, Rx)> = {
            let keys: Vec<(usize, usize)> =
                edges.keys().filter(|(f, _)| *f == rip).copied().collect();
            keys.into_iter().map(|key| (key.1, edges.remove(&key).unwrap())).collect()
        };
        for (from, rin) in &ins {
            for (to, rout) in &outs {
                let through = Rx::seq(clone_rx(rin), Rx::seq(clone_rx(&own), clone_rx(rout)));
                add(&mut edges, *from, *to, through);
            }
        }
    }
    let rx = edges.remove(&(src, snk)).unwrap_or(Rx::Empty);
    let mut out = String::new();
    rx.render(&mut out, 0);
    out
}

fn clone_rx(r: &Rx) -> Rx {
    match r {
        Rx::Empty => Rx::Empty,
        Rx::Eps => Rx::Eps,
        Rx::Letter(l) => Rx::Letter(l.clone()),
        Rx::Seq(a, b) => Rx::Seq(Box::new(clone_rx(a)), Box::new(clone_rx(b))),
        Rx::Alt(a, b) => Rx::Alt(Box::new(clone_rx(a)), Box::new(clone_rx(b))),
        Rx::Star(a) => Rx::Star(Box::new(clone_rx(a))),
    }
}

// ---------------------------------------------------------------------------
// DTDs

/// Non-recursive regular tree grammar: each node labeled `X` must have a
/// child-label word in `content[X]`'s language.
#[derive(Debug, Clone)]
pub struct Dtd {
    pub nonterminals: BTreeSet<String>,
    pub start: String,
    pub content: BTreeMap<String, Nfa>,
}

/// Checks that no nonterminal can appear strictly below itself: the graph
/// with an edge `A -> B` whenever `B` occurs in some word of `A`'s content
/// model must be acyclic. Non-recursive DTDs bound tree depth by the number
/// of nonterminals.
pub fn is_nonrecursive(d: &Dtd) -> bool {
    let names: Vec<&String> = d.nonterminals.iter().collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut edges: Vec<(usize, String, usize)> = Vec::new();
    for (a, nfa) in &d.content {
        let Some(&ia) = index.get(a.as_str()) else { continue };
        for b in nfa.useful_letters() {
            if let Some(&ib) = index.get(b.as_str()) {
                edges.push((ia, b, ib));
            }
        }
    }
    !has_cycle(names.len(), &edges)
}

pub fn dtd_accepts_tree(d: &Dtd, t: &Tree) -> bool {
    fn rec(d: &Dtd, t: &Tree) -> bool {
        let Some(nfa) = d.content.get(&t.label) else {
            return false;
        };
        let labels: Vec<&str> = t.children.iter().map(|c| c.label.as_str()).collect();
        nfa.accepts(&labels) && t.children.iter().all(|c| rec(d, c))
    }
    t.label == d.start && rec(d, t)
}

/// Counts the trees of the DTD language. Letters that can head no tree are
/// discounted first, so loops over them do not fake infinity.
pub fn count_dtd_trees(d: &Dtd) -> CountResult {
    // realizable nonterminals: content accepts a word over realizable letters
    let mut realizable: BTreeSet<String> = BTreeSet::new();
    loop {
        let mut changed = false;
        for x in &d.nonterminals {
            if realizable.contains(x) {
                continue;
            }
            if d.content[x].accepts_some_word_over(&realizable) {
                realizable.insert(x.clone());
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !realizable.contains(&d.start) {
        return CountResult::Finite(0);
    }

    // nonterminals reachable from the start through realizable content
    let mut reach: BTreeSet<String> = BTreeSet::from([d.start.clone()]);
    let mut queue = VecDeque::from([d.start.clone()]);
    let mut letter_cycle = false;
    while let Some(x) = queue.pop_front() {
        let useful = d.content[&x].useful_transitions(Some(&realizable));
        if has_cycle(d.content[&x].states.len(), &useful) {
            letter_cycle = true;
        }
        for (_, y, _) in useful {
            if realizable.contains(&y) && reach.insert(y.clone()) {
                queue.push_back(y);
            }
        }
    }
    if letter_cycle {
        return CountResult::Infinite;
    }
    let names: Vec<&String> = reach.iter().collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut edges = Vec::new();
    for (i, x) in names.iter().enumerate() {
        for (_, y, _) in d.content[x.as_str()].useful_transitions(Some(&realizable)) {
            if let Some(&j) = index.get(y.as_str()) {
                edges.push((i, y, j));
            }
        }
    }
    if has_cycle(names.len(), &edges) {
        return CountResult::Infinite;
    }

    // acyclic dependency: weighted path sums in topological order
    let mut counts: HashMap<String, u128> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut marked: BTreeSet<String> = BTreeSet::new();
    fn topo(
        x: &str,
        d: &Dtd,
        realizable: &BTreeSet<String>,
        marked: &mut BTreeSet<String>,
        order: &mut Vec<String>,
    ) {
        if !marked.insert(x.to_string()) {
            return;
        }
        for (_, y, _) in d.content[x].useful_transitions(Some(realizable)) {
            if realizable.contains(&y) {
                topo(&y, d, realizable, marked, order);
            }
        }
        order.push(x.to_string());
    }
    topo(&d.start, d, &realizable, &mut marked, &mut order);
    for x in &order {
        // determinize so an ambiguous content model does not count a word twice
        let dfa = determinize_restricted(&d.content[x], &realizable);
        let c = count_words_weighted(&dfa, &realizable, &counts);
        counts.insert(x.clone(), c);
    }
    CountResult::Finite(counts[&d.start])
}

/// Language-preserving shrink to the minimal partial DFA via a double
/// reverse-determinize pass. Content models assembled by rotation carry many
/// duplicated spines; consumers that pay per NFA state condense first.
pub(crate) fn condense(nfa: &Nfa) -> Nfa {
    fn reverse(n: &Nfa) -> Nfa {
        Nfa {
            states: n.states.clone(),
            alphabet: n.alphabet.clone(),
            transitions: n.transitions.iter().map(|(p, l, q)| (*q, l.clone(), *p)).collect(),
            initial: n.finals.clone(),
            finals: n.initial.clone(),
        }
    }
    let letters: BTreeSet<String> =
        nfa.transitions.iter().map(|(_, l, _)| l.clone()).collect();
    let r = determinize_restricted(&reverse(nfa), &letters);
    determinize_restricted(&reverse(&r), &letters)
}

/// Subset construction restricted to the `allowed` letters. The result is
/// partial (no dead sink), so an acyclic input stays acyclic.
fn determinize_restricted(nfa: &Nfa, allowed: &BTreeSet<String>) -> Nfa {
    let edges = nfa.useful_transitions(Some(allowed));
    let letters: BTreeSet<String> = edges.iter().map(|(_, l, _)| l.clone()).collect();
    let start: BTreeSet<usize> = nfa.initial.clone();
    let mut index: HashMap<BTreeSet<usize>, usize> = HashMap::from([(start.clone(), 0)]);
    let mut subsets = vec![start];
    let mut transitions = Vec::new();
    let mut at = 0;
    while at < subsets.len() {
        let from = subsets[at].clone();
        for l in &letters {
            let to: BTreeSet<usize> = edges
                .iter()
                .filter(|(p, e, _)| from.contains(p) && e == l)
                .map(|(_, _, q)| *q)
                .collect();
            if to.is_empty() {
                continue;
            }
            let j = *index.entry(to.clone()).or_insert_with(|| {
                subsets.push(to);
                subsets.len() - 1
            });
            transitions.push((at, l.clone(), j));
        }
        at += 1;
    }
    let finals = (0..subsets.len())
        .filter(|&i| subsets[i].iter().any(|q| nfa.finals.contains(q)))
        .collect();
    Nfa {
        states: (0..subsets.len()).map(|i| format!("d{i}")).collect(),
        alphabet: letters,
        transitions,
        initial: BTreeSet::from([0]),
        finals,
    }
}

/// Sum over accepting paths of the product of letter weights; the restricted
/// automaton is acyclic and deterministic by the time this runs.
fn count_words_weighted(
    nfa: &Nfa,
    allowed: &BTreeSet<String>,
    weights: &HashMap<String, u128>,
) -> u128 {
    let useful = nfa.useful_transitions(Some(allowed));
    let n = nfa.states.len();
    // topological order of the useful subgraph
    let mut adj: Vec<Vec<(String, usize)>> = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for (p, l, q) in &useful {
        adj[*p].push((l.clone(), *q));
        indeg[*q] += 1;
    }
    let mut ways = vec![0u128; n];
    for &q in &nfa.initial {
        ways[q] = ways[q].saturating_add(1);
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&q| indeg[q] == 0).collect();
    let mut seen = 0;
    while let Some(p) = queue.pop_front() {
        seen += 1;
        for (l, q) in &adj[p] {
            let w = weights.get(l).copied().unwrap_or(0);
            ways[*q] = ways[*q].saturating_add(ways[p].saturating_mul(w));
            indeg[*q] -= 1;
            if indeg[*q] == 0 {
                queue.push_back(*q);
            }
        }
    }
    debug_assert_eq!(seen, n, "weighted word count expects an acyclic restriction");
    nfa.finals.iter().map(|&q| ways[q]).fold(0u128, u128::saturating_add)
}

/// Enumerates distinct DTD trees in (node count, structural) order, mirroring
/// the forest enumerator: up to `budget` trees plus a truncation flag.
pub fn enumerate_dtd_trees(d: &Dtd, budget: usize) -> (Vec<Tree>, bool) {
    let (target, truncated) = match count_dtd_trees(d) {
        CountResult::Finite(c) => {
            let c = usize::try_from(c).unwrap_or(usize::MAX);
            (c.min(budget), c > budget)
        }
        CountResult::Infinite => (budget, true),
    };
    let mut out: Vec<Tree> = Vec::new();
    let mut en = DtdEnum { d, memo: HashMap::new(), paths: HashMap::new(), seq_paths: HashMap::new() };
    let mut size = 1;
    while out.len() < target {
        // the path count gates the layer so empty sizes cost one table lookup
        if en.paths_of(&d.start, size) > 0 {
            let layer = en.trees_of(&d.start, size);
            for t in layer.iter() {
                if out.len() == target {
                    break;
                }
                out.push(t.clone());
            }
        }
        size += 1;
    }
    (out, truncated)
}

/// Size-layered enumeration state. `paths`/`seq_paths` hold saturating counts
/// of accepting content paths, used only as zero tests so the tree recursion
/// never explores a branch that cannot finish.
struct DtdEnum<'a> {
    d: &'a Dtd,
    memo: HashMap<(String, usize), Rc<Vec<Tree>>>,
    paths: HashMap<(String, usize), u128>,
    seq_paths: HashMap<(String, usize, usize), u128>,
}

impl DtdEnum<'_> {
    /// Accepting-path count for trees labeled `x` with exactly `size` nodes.
    fn paths_of(&mut self, x: &str, size: usize) -> u128 {
        if size == 0 || !self.d.content.contains_key(x) {
            return 0;
        }
        let key = (x.to_string(), size);
        if let Some(&c) = self.paths.get(&key) {
            return c;
        }
        let nfa = &self.d.content[x];
        let inits: Vec<usize> = nfa.initial.iter().copied().collect();
        let mut c: u128 = 0;
        for q in inits {
            c = c.saturating_add(self.seq_paths_of(x, q, size - 1));
        }
        self.paths.insert(key, c);
        c
    }

    /// Path count for child sequences of `x` read from state `q` totalling
    /// exactly `budget` nodes. Recursion terminates: the budget shrinks by at
    /// least one per child and per nesting level.
    fn seq_paths_of(&mut self, x: &str, q: usize, budget: usize) -> u128 {
        let nfa = &self.d.content[x];
        if budget == 0 {
            return u128::from(nfa.finals.contains(&q));
        }
        let key = (x.to_string(), q, budget);
        if let Some(&c) = self.seq_paths.get(&key) {
            return c;
        }
        let step: Vec<(String, usize)> = nfa
            .transitions
            .iter()
            .filter(|(p, _, _)| *p == q)
            .map(|(_, l, to)| (l.clone(), *to))
            .collect();
        let mut c: u128 = 0;
        for (letter, to) in step {
            for k in 1..=budget {
                let heads = self.paths_of(&letter, k);
                if heads == 0 {
                    continue;
                }
                c = c.saturating_add(heads.saturating_mul(self.seq_paths_of(x, to, budget - k)));
            }
        }
        self.seq_paths.insert(key, c);
        c
    }

    fn trees_of(&mut self, x: &str, size: usize) -> Rc<Vec<Tree>> {
        if let Some(hit) = self.memo.get(&(x.to_string(), size)) {
            return hit.clone();
        }
        let mut found: BTreeSet<Tree> = BTreeSet::new();
        if self.paths_of(x, size) > 0 {
            let nfa = &self.d.content[x];
            let inits: Vec<usize> = nfa.initial.iter().copied().collect();
            for q in inits {
                for seq in self.child_seqs(x, q, size - 1) {
                    found.insert(Tree::node(x, seq));
                }
            }
        }
        let rc = Rc::new(found.into_iter().collect::<Vec<_>>());
        self.memo.insert((x.to_string(), size), rc.clone());
        rc
    }

    /// Child sequences spelled by the content of `x` from state `q` whose
    /// trees total exactly `budget` nodes.
    fn child_seqs(&mut self, x: &str, q: usize, budget: usize) -> Vec<Vec<Tree>> {
        let mut out = Vec::new();
        if budget == 0 {
            if self.d.content[x].finals.contains(&q) {
                out.push(Vec::new());
            }
            return out;
        }
        let step: Vec<(String, usize)> = self.d.content[x]
            .transitions
            .iter()
            .filter(|(p, _, _)| *p == q)
            .map(|(_, l, to)| (l.clone(), *to))
            .collect();
        for (letter, to) in step {
            for k in 1..=budget {
                if self.paths_of(&letter, k) == 0 || self.seq_paths_of(x, to, budget - k) == 0 {
                    continue;
                }
                let heads = self.trees_of(&letter, k);
                let tails = self.child_seqs(x, to, budget - k);
                for head in heads.iter() {
                    for tail in &tails {
                        let mut seq = Vec::with_capacity(1 + tail.len());
                        seq.push(head.clone());
                        seq.extend(tail.iter().cloned());
                        out.push(seq);
                    }
                }
            }
        }
        out
    }
}

/// One line per nonterminal: `NAME -> regex-of-content-model`.
pub fn dump_dtd(d: &Dtd) -> String {
    let mut lines = Vec::new();
    let emit = |x: &String, lines: &mut Vec<String>| {
        lines.push(format!("{} -> {}", x, nfa_to_regex(&d.content[x])));
    };
    emit(&d.start, &mut lines);
    for x in &d.nonterminals {
        if *x != d.start {
            emit(x, &mut lines);
        }
    }
    lines.join("\n")
}

// ---------------------------------------------------------------------------
// Proposition interpretations and formula relabeling

/// Maps source-vocabulary atoms to formulas over a new label vocabulary.
#[derive(Debug, Clone, Default)]
pub struct PropInterp {
    map: BTreeMap<String, NodeFormula>,
}

impl PropInterp {
    pub fn define(&mut self, atom: impl Into<String>, f: NodeFormula) {
        self.map.insert(atom.into(), f);
    }

    pub fn formula_for(&self, atom: &str) -> Option<&NodeFormula> {
        self.map.get(atom)
    }

    pub fn atoms(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

/// Homomorphic atom substitution; every other constructor is kept.
/// Substituted subformulas are shared, so the result grows by at most the
/// largest interpretation per atom occurrence.
pub fn relabel_formula(f: &NodeFormula, interp: &PropInterp) -> Result<NodeFormula, DtdError> {
    Ok(match f.as_ref() {
        NodeF::True => NodeFormula::tt(),
        NodeF::False => NodeFormula::ff(),
        NodeF::Atom(p) => interp
            .formula_for(p)
            .cloned()
            .ok_or_else(|| DtdError::MissingInterpretation(p.clone()))?,
        NodeF::Not(a) => relabel_formula(a, interp)?.not(),
        NodeF::And(a, b) => relabel_formula(a, interp)?.and(relabel_formula(b, interp)?),
        NodeF::Or(a, b) => relabel_formula(a, interp)?.or(relabel_formula(b, interp)?),
        NodeF::Implies(a, b) => relabel_formula(a, interp)?.implies(relabel_formula(b, interp)?),
        NodeF::Iff(a, b) => NodeFormula::iff(relabel_formula(a, interp)?, relabel_formula(b, interp)?),
        NodeF::Diamond(p, a) => {
            NodeFormula::diamond(relabel_path(p, interp)?, relabel_formula(a, interp)?)
        }
        NodeF::Box(p, a) => {
            NodeFormula::boxed(relabel_path(p, interp)?, relabel_formula(a, interp)?)
        }
    })
}

fn relabel_path(p: &PathFormula, interp: &PropInterp) -> Result<PathFormula, DtdError> {
    Ok(match p.as_ref() {
        PathF::Step(a) => PathFormula::step(*a),
        PathF::Seq(x, y) => relabel_path(x, interp)?.seq(relabel_path(y, interp)?),
        PathF::Alt(x, y) => relabel_path(x, interp)?.alt(relabel_path(y, interp)?),
        PathF::Star(x) => relabel_path(x, interp)?.star(),
        PathF::Inverse(x) => relabel_path(x, interp)?.inverse(),
        PathF::Test(f) => PathFormula::test(relabel_formula(f, interp)?),
    })
}

// ---------------------------------------------------------------------------
// Acyclic route: the forest automaton is already a DTD

/// Reads an acyclic, localized, trimmed forest automaton as a DTD: every
/// state becomes a nonterminal whose content model is the finite union of
/// its rules' child sequences. Also returns the interpretation sending each
/// proposition to the disjunction of the localized labels that carry it.
pub fn dtd_from_acyclic(
    a: &ForestAutomaton,
    ctx: &EvalCtx,
) -> Result<(Dtd, PropInterp), DtdError> {
    if a.flavor != Flavor::Localized {
        return Err(DtdError::NotLocalized);
    }
    if state_cycle(a) {
        return Err(DtdError::RecursiveInput);
    }
    let Some(q0) = a.initial else {
        return Err(DtdError::EmptyForest);
    };
    let mut nonterminals = BTreeSet::new();
    let mut content = BTreeMap::new();
    for (q, s) in a.states.iter().enumerate() {
        let name = s.localized_label();
        let mut nfa = Nfa::empty_language();
        for rule in a.rules_of(q) {
            let letters: Vec<String> =
                rule.children.iter().map(|&c| a.states[c].localized_label()).collect();
            nfa = Nfa::union(&nfa, &Nfa::word(&letters));
        }
        nonterminals.insert(name.clone());
        content.insert(name, nfa);
    }
    let dtd = Dtd { nonterminals, start: a.states[q0].localized_label(), content };

    let mut interp = PropInterp::default();
    for atom in &ctx.known {
        let labels = a
            .states
            .iter()
            .filter(|s| ctx.holds(&s.sym, atom))
            .map(|s| NodeFormula::atom(s.localized_label()));
        interp.define(atom.clone(), or_all(labels));
    }
    Ok((dtd, interp))
}

// ---------------------------------------------------------------------------
// Epsilon-free route: chains and rotation

fn require_binarized_epsfree(a: &ForestAutomaton) -> Result<(), DtdError> {
    for rule in &a.rules {
        if rule.children.len() > 2 {
            return Err(DtdError::NotBinarized(
                a.states[rule.lhs].localized_label(),
                rule.children.len(),
            ));
        }
    }
    if let Some(s) = a.states.iter().find(|s| s.sym == "eps") {
        return Err(DtdError::NotEpsilonFree(s.localized_label()));
    }
    Ok(())
}

fn plain_label(a: &ForestAutomaton, q: usize) -> String {
    a.states[q].localized_label()
}

/// Barred copies mark non-final chain elements; plain labels always start
/// with a span digit, so the prefix cannot collide.
fn bar_label(a: &ForestAutomaton, q: usize) -> String {
    format!("bar_{}", a.states[q].localized_label())
}

/// The word automaton for the unit-rule chains out of `q`: all words
/// `b(q0) b(q1) .. b(qn-1) qn` where `q0 = q`, consecutive elements are
/// linked by single-child rules, and the last element owns a two-child or
/// leaf rule. States are identified by index into `a.states`.
/// Pre: `a` is binarized and epsilon-free.
pub fn chains_nfa(a: &ForestAutomaton, q: usize) -> Result<Nfa, DtdError> {
    require_binarized_epsfree(a)?;
    let n = a.state_count();
    let mut states = Vec::with_capacity(2 * n);
    let mut alphabet = BTreeSet::new();
    for i in 0..n {
        states.push(bar_label(a, i));
        alphabet.insert(bar_label(a, i));
    }
    for i in 0..n {
        states.push(plain_label(a, i));
        alphabet.insert(plain_label(a, i));
    }
    let mut transitions = Vec::new();
    for p in 0..n {
        let mut terminates = false;
        for rule in a.rules_of(p) {
            match rule.children.len() {
                1 => transitions.push((p, bar_label(a, p), rule.children[0])),
                _ => terminates = true,
            }
        }
        if terminates {
            transitions.push((p, plain_label(a, p), n + p));
        }
    }
    Ok(Nfa {
        states,
        alphabet,
        transitions,
        initial: BTreeSet::from([q]),
        finals: (n..2 * n).collect(),
    })
}

/// The rotation of an epsilon-free forest: a non-recursive DTD together
/// with the label interpretation and the rewriting of path steps that make
/// model checking commute with [`rotate_tree`].
#[derive(Debug, Clone)]
pub struct Rotation {
    pub dtd: Dtd,
    pub interp: PropInterp,
    /// Holds exactly at barred nodes.
    pub bar: NodeFormula,
    forest: ForestAutomaton,
}

/// Synthetic root label of every rotated tree; its children spell the chain
/// of the forest's initial state.
pub const ROTATION_ROOT: &str = "top";

/// Folds every unit-rule chain of the forest into a run of siblings: each
/// non-final chain element survives as a barred leaf and the final element
/// keeps its two subtree chains as children. Depth is bounded by two even
/// though the source forest may pump unit cycles, because pumping now grows
/// sibling runs instead.
/// Pre: `a` is trimmed, binarized and epsilon-free.
pub fn rotate_epsfree(a: &ForestAutomaton, ctx: &EvalCtx) -> Result<Rotation, DtdError> {
    require_binarized_epsfree(a)?;
    if a.flavor == Flavor::Plain {
        return Err(DtdError::NotTrimmed);
    }
    let n = a.state_count();
    let mut nonterminals: BTreeSet<String> = BTreeSet::from([ROTATION_ROOT.to_string()]);
    let mut content: BTreeMap<String, Nfa> = BTreeMap::new();
    let root_content = match a.initial {
        Some(q0) => chains_nfa(a, q0)?,
        None => Nfa::empty_language(),
    };
    content.insert(ROTATION_ROOT.to_string(), root_content);
    for q in 0..n {
        nonterminals.insert(bar_label(a, q));
        content.insert(bar_label(a, q), Nfa::epsilon());
        let mut nfa = Nfa::empty_language();
        for rule in a.rules_of(q) {
            match rule.children.len() {
                0 => nfa = Nfa::union(&nfa, &Nfa::epsilon()),
                1 => {}
                _ => {
                    let left = chains_nfa(a, rule.children[0])?;
                    let right = chains_nfa(a, rule.children[1])?;
                    nfa = Nfa::union(&nfa, &Nfa::concat(&left, &right));
                }
            }
        }
        nonterminals.insert(plain_label(a, q));
        content.insert(plain_label(a, q), nfa);
    }
    let dtd = Dtd { nonterminals, start: ROTATION_ROOT.to_string(), content };

    let mut interp = PropInterp::default();
    for atom in &ctx.known {
        let labels = a.states.iter().enumerate().filter(|(_, s)| ctx.holds(&s.sym, atom)).map(
            |(q, _)| {
                NodeFormula::atom(plain_label(a, q)).or(NodeFormula::atom(bar_label(a, q)))
            },
        );
        interp.define(atom.clone(), or_all(labels));
    }
    let bar = or_all((0..n).map(|q| NodeFormula::atom(bar_label(a, q))));
    Ok(Rotation { dtd, interp, bar, forest: a.clone() })
}

impl Rotation {
    /// Evaluation context for rotated trees: every DTD label is its own
    /// proposition.
    pub fn eval_ctx(&self) -> EvalCtx {
        EvalCtx::from_labels(self.dtd.nonterminals.iter().cloned())
    }

    pub fn forest(&self) -> &ForestAutomaton {
        &self.forest
    }

    /// Children of an original node: from a final chain element, real
    /// children are the chain heads below it; from a barred element, the
    /// lone unit child is simply the next sibling. The root guard keeps the
    /// synthetic top node out of the image.
    fn rho_down(&self) -> PathFormula {
        let not_bar = || PathFormula::test(self.bar.clone().not());
        let not_top = PathFormula::test(NodeFormula::atom(ROTATION_ROOT).not());
        let chain_head = PathFormula::test(NodeFormula::boxed(
            PathFormula::left(),
            self.bar.clone().not(),
        ));
        let to_subtrees = not_bar().seq(not_top).seq(PathFormula::down()).seq(chain_head);
        let within_chain = PathFormula::test(self.bar.clone()).seq(PathFormula::right());
        to_subtrees.alt(within_chain)
    }

    /// Right sibling of an original node: start at a chain head, slide to
    /// the end of its own chain, then step onto the next chain's head.
    fn rho_right(&self) -> PathFormula {
        let chain_head = PathFormula::test(NodeFormula::boxed(
            PathFormula::left(),
            self.bar.clone().not(),
        ));
        let slide = PathFormula::test(self.bar.clone()).seq(PathFormula::right()).star();
        chain_head
            .seq(slide)
            .seq(PathFormula::test(self.bar.clone().not()))
            .seq(PathFormula::right())
    }

    pub fn transform_node(&self, f: &NodeFormula) -> Result<NodeFormula, DtdError> {
        Ok(match f.as_ref() {
            NodeF::True => NodeFormula::tt(),
            NodeF::False => NodeFormula::ff(),
            NodeF::Atom(p) => self
                .interp
                .formula_for(p)
                .cloned()
                .ok_or_else(|| DtdError::MissingInterpretation(p.clone()))?,
            NodeF::Not(a) => self.transform_node(a)?.not(),
            NodeF::And(a, b) => self.transform_node(a)?.and(self.transform_node(b)?),
            NodeF::Or(a, b) => self.transform_node(a)?.or(self.transform_node(b)?),
            NodeF::Implies(a, b) => self.transform_node(a)?.implies(self.transform_node(b)?),
            NodeF::Iff(a, b) => NodeFormula::iff(self.transform_node(a)?, self.transform_node(b)?),
            NodeF::Diamond(p, a) => {
                NodeFormula::diamond(self.transform_path(p)?, self.transform_node(a)?)
            }
            NodeF::Box(p, a) => {
                NodeFormula::boxed(self.transform_path(p)?, self.transform_node(a)?)
            }
        })
    }

    pub fn transform_path(&self, p: &PathFormula) -> Result<PathFormula, DtdError> {
        Ok(match p.as_ref() {
            PathF::Step(Axis::Down) => self.rho_down(),
            PathF::Step(Axis::Right) => self.rho_right(),
            PathF::Seq(x, y) => self.transform_path(x)?.seq(self.transform_path(y)?),
            PathF::Alt(x, y) => self.transform_path(x)?.alt(self.transform_path(y)?),
            PathF::Star(x) => self.transform_path(x)?.star(),
            PathF::Inverse(x) => self.transform_path(x)?.inverse(),
            PathF::Test(f) => PathFormula::test(self.transform_node(f)?),
        })
    }

    /// Rewrites a root-evaluated formula for rotated trees: the original
    /// root's representative is the first child of the synthetic top node.
    pub fn anchored(&self, f: &NodeFormula) -> Result<NodeFormula, DtdError> {
        let first = NodeFormula::diamond(PathFormula::left(), NodeFormula::tt()).not();
        let to_rep = PathFormula::down().seq(PathFormula::test(first));
        Ok(NodeFormula::diamond(to_rep, self.transform_node(f)?))
    }
}

struct AnnNode {
    state: usize,
    children: Vec<AnnNode>,
}

/// Runs the forest automaton over `t` bottom-up; spans and labels determine
/// the state of every node uniquely, so a run is an annotation.
fn annotate(
    a: &ForestAutomaton,
    index: &HashMap<(usize, String, usize), usize>,
    t: &Tree,
    start: usize,
) -> Result<(AnnNode, usize), DtdError> {
    let mut children = Vec::new();
    let mut end = start;
    for c in &t.children {
        let (node, j) = annotate(a, index, c, end)?;
        children.push(node);
        end = j;
    }
    if t.children.is_empty() {
        end = start + 1;
    }
    let key = (start, t.label.clone(), end);
    let Some(&state) = index.get(&key) else {
        return Err(DtdError::NotInForest(format!(
            "no state ({},{},{})",
            start, t.label, end
        )));
    };
    let child_states: Vec<usize> = children.iter().map(|c| c.state).collect();
    let has_rule = a
        .rules_of(state)
        .any(|r| r.label == t.label && r.children == child_states);
    if !has_rule {
        return Err(DtdError::NotInForest(format!(
            "no rule for ({},{},{}) over its children",
            start, t.label, end
        )));
    }
    Ok((AnnNode { state, children }, end))
}

/// Rotates one parse tree of the forest into the DTD world. The image tree
/// starts with the [`ROTATION_ROOT`] node whose children are the root chain.
/// Distinct parse trees rotate to distinct images.
/// Pre: `a` is trimmed, binarized and epsilon-free; `t` is accepted by `a`.
pub fn rotate_tree(a: &ForestAutomaton, t: &Tree) -> Result<Tree, DtdError> {
    require_binarized_epsfree(a)?;
    let Some(q0) = a.initial else {
        return Err(DtdError::EmptyForest);
    };
    let index: HashMap<(usize, String, usize), usize> = a
        .states
        .iter()
        .enumerate()
        .map(|(q, s)| ((s.i, s.sym.clone(), s.j), q))
        .collect();
    let (ann, _) = annotate(a, &index, t, a.states[q0].i)?;
    if ann.state != q0 {
        return Err(DtdError::NotInForest("root state is not initial".to_string()));
    }
    Ok(Tree::node(ROTATION_ROOT, rotate_chain(a, &ann)))
}

fn rotate_chain(a: &ForestAutomaton, node: &AnnNode) -> Vec<Tree> {
    let mut out = Vec::new();
    let mut cur = node;
    loop {
        match cur.children.len() {
            1 => {
                out.push(Tree::leaf(bar_label(a, cur.state)));
                cur = &cur.children[0];
            }
            0 => {
                out.push(Tree::leaf(plain_label(a, cur.state)));
                return out;
            }
            _ => {
                let mut kids = rotate_chain(a, &cur.children[0]);
                kids.extend(rotate_chain(a, &cur.children[1]));
                out.push(Tree::node(plain_label(a, cur.state), kids));
                return out;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{
        accepts_tree, build_forest_automaton, collect_trees, count_trees, delocalize_tree,
        localize, trim,
    };
    use crate::grammar::{binarize, parse_grammar_text, Cfg};
    use crate::pdl::{model_check, parse_node_formula, MacroEnv};
    use crate::testgen;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn grammar(text: &str) -> Cfg {
        parse_grammar_text(text).unwrap()
    }

    fn trimmed(g: &Cfg, w: &str) -> ForestAutomaton {
        trim(&build_forest_automaton(g, &words(w)).unwrap())
    }

    fn state_index(a: &ForestAutomaton, i: usize, sym: &str, j: usize) -> usize {
        a.states
            .iter()
            .position(|s| s.i == i && s.sym == sym && s.j == j)
            .unwrap_or_else(|| panic!("no state ({i},{sym},{j})"))
    }

    #[test]
    fn nfa_operations() {
        let ab = Nfa::word(&words("a b"));
        assert!(ab.accepts(&["a", "b"]));
        assert!(!ab.accepts(&["a"]));
        assert!(!ab.accepts(&["b", "a"]));
        let c = Nfa::word(&words("c"));
        let u = Nfa::union(&ab, &c);
        assert!(u.accepts(&["a", "b"]) && u.accepts(&["c"]) && !u.accepts(&["a", "c"]));
        let cat = Nfa::concat(&u, &c);
        assert!(cat.accepts(&["a", "b", "c"]) && cat.accepts(&["c", "c"]));
        assert!(!cat.accepts(&["c"]));
        let eps = Nfa::epsilon();
        assert!(eps.accepts::<&str>(&[]) && !eps.accepts(&["a"]));
        let with_eps = Nfa::concat(&eps, &c);
        assert!(with_eps.accepts(&["c"]) && !with_eps.accepts::<&str>(&[]));
        assert!(Nfa::empty_language().is_language_empty());
        assert!(!u.is_language_empty());
        assert_eq!(u.useful_letters(), words("a b c").into_iter().collect());
        assert!(u.has_finite_language());
    }

    #[test]
    fn nonrecursive_rejects_self_content() {
        // content(A) accepts the word "A"
        let nfa = Nfa::word(&words("A"));
        let dtd = Dtd {
            nonterminals: BTreeSet::from(["A".to_string()]),
            start: "A".to_string(),
            content: BTreeMap::from([("A".to_string(), nfa)]),
        };
        assert!(!is_nonrecursive(&dtd));
        // but a uselessly looping transition does not count
        let mut loopy = Nfa::word(&words("B"));
        let dead = loopy.states.len();
        loopy.states.push("dead".to_string());
        loopy.transitions.push((dead, "A".to_string(), dead));
        let dtd = Dtd {
            nonterminals: BTreeSet::from(["A".to_string(), "B".to_string()]),
            start: "A".to_string(),
            content: BTreeMap::from([
                ("A".to_string(), loopy),
                ("B".to_string(), Nfa::epsilon()),
            ]),
        };
        assert!(is_nonrecursive(&dtd));
    }

    #[test]
    fn acyclic_route_single_rule() {
        let g = grammar("axiom S ; S -> \"a\" ;");
        let a = localize(&trimmed(&g, "a"));
        let (dtd, _) = dtd_from_acyclic(&a, &EvalCtx::from_cfg(&g)).unwrap();
        assert_eq!(dtd.start, "0_S_1");
        let content = &dtd.content["0_S_1"];
        assert!(content.accepts(&["0_a_1"]));
        assert!(!content.accepts::<&str>(&[]));
        assert!(!content.accepts(&["0_a_1", "0_a_1"]));
        assert!(!content.accepts(&["0_S_1"]));
        assert!(is_nonrecursive(&dtd));
        assert_eq!(count_dtd_trees(&dtd), CountResult::Finite(1));
        let dump = dump_dtd(&dtd);
        assert!(dump.lines().next().unwrap().starts_with("0_S_1 -> "));
        assert!(dump.contains("0_S_1 -> 0_a_1"));
    }

    #[test]
    fn acyclic_route_dangling_else() {
        let g = grammar(include_str!("../../../fixtures/dangling_else.cfg"));
        let w = "if true then if false then skip else skip";
        let forest = trimmed(&g, w);
        let local = localize(&forest);
        let (dtd, interp) = dtd_from_acyclic(&local, &EvalCtx::from_cfg(&g)).unwrap();
        assert!(is_nonrecursive(&dtd));
        assert_eq!(count_dtd_trees(&dtd), CountResult::Finite(2));
        let (dtd_trees, cut) = enumerate_dtd_trees(&dtd, 10);
        assert!(!cut);
        // the DTD trees are exactly the localized parse trees
        let (local_trees, _) = collect_trees(&local, 10);
        let mut expect = local_trees.clone();
        expect.sort();
        let mut got = dtd_trees.clone();
        got.sort();
        assert_eq!(got, expect);
        for t in &dtd_trees {
            assert!(dtd_accepts_tree(&dtd, t));
        }
        // interpretation turns original-atom formulas into localized ones
        let env = MacroEnv::builtins();
        let phi = parse_node_formula(
            include_str!("../../../fixtures/dangling_else.pdl"),
            &env,
        )
        .unwrap();
        let relabeled = relabel_formula(&phi, &interp).unwrap();
        let ctx = EvalCtx::from_cfg(&g);
        let local_ctx = EvalCtx::from_labels(dtd.nonterminals.iter().cloned());
        for loc in &local_trees {
            let orig = delocalize_tree(&local, loc);
            assert_eq!(
                model_check(&orig, &phi, &ctx).unwrap(),
                model_check(loc, &relabeled, &local_ctx).unwrap()
            );
        }
    }

    #[test]
    fn acyclic_route_rejects_recursive_and_unlocalized() {
        let g = grammar("axiom S ; S -> S | \"a\" ;");
        let a = trimmed(&g, "a");
        assert_eq!(
            dtd_from_acyclic(&localize(&a), &EvalCtx::from_cfg(&g)).unwrap_err(),
            DtdError::RecursiveInput
        );
        let g2 = grammar("axiom S ; S -> \"a\" ;");
        let a2 = trimmed(&g2, "a");
        assert_eq!(
            dtd_from_acyclic(&a2, &EvalCtx::from_cfg(&g2)).unwrap_err(),
            DtdError::NotLocalized
        );
    }

    #[test]
    fn random_acyclic_counts_agree() {
        let mut rng = testgen::rng(41);
        let mut done = 0;
        while done < 30 {
            let g = testgen::random_acyclic_epsfree_cfg(&mut rng, 4);
            let Some(w) = testgen::random_derivation_word(&mut rng, &g, 5) else {
                continue;
            };
            let forest = trim(&build_forest_automaton(&g, &w).unwrap());
            if forest.initial.is_none() {
                continue;
            }
            let local = localize(&forest);
            let (dtd, _) = dtd_from_acyclic(&local, &EvalCtx::from_cfg(&g)).unwrap();
            assert!(is_nonrecursive(&dtd));
            assert_eq!(count_dtd_trees(&dtd), count_trees(&forest), "grammar:\n{g:?}\nword {w:?}");
            done += 1;
        }
    }

    #[test]
    fn chains_of_unit_cycle() {
        let g = grammar("axiom S ; S -> S | \"a\" ;");
        let a = trimmed(&g, "a");
        let q_s = state_index(&a, 0, "S", 1);
        let chains = chains_nfa(&a, q_s).unwrap();
        for k in 1..=4 {
            let mut w = vec!["bar_0_S_1"; k];
            w.push("0_a_1");
            assert!(chains.accepts(&w), "k = {k}");
        }
        assert!(!chains.accepts(&["0_S_1"]));
        assert!(!chains.accepts(&["0_a_1"]));
        assert!(!chains.accepts(&["bar_0_S_1"]));
        assert!(!chains.accepts(&["bar_0_S_1", "bar_0_S_1"]));
        assert!(!chains.accepts(&["0_a_1", "bar_0_S_1"]));
        assert!(!chains.has_finite_language());
    }

    #[test]
    fn chains_singleton_and_concatenation() {
        // S -> A B, A -> C, C -> "a", B -> "b": two chains of different length
        let g = grammar("axiom S ; S -> A B ; A -> C ; C -> \"a\" ; B -> \"b\" ;");
        let a = trimmed(&g, "a b");
        let q_s = state_index(&a, 0, "S", 2);
        let s_chain = chains_nfa(&a, q_s).unwrap();
        assert!(s_chain.accepts(&["0_S_2"]));
        assert!(!s_chain.accepts(&["bar_0_S_2", "0_S_2"]));
        let q_a = state_index(&a, 0, "A", 1);
        let q_b = state_index(&a, 1, "B", 2);
        let left = chains_nfa(&a, q_a).unwrap();
        let right = chains_nfa(&a, q_b).unwrap();
        assert!(left.accepts(&["bar_0_A_1", "bar_0_C_1", "0_a_1"]));
        assert!(!left.accepts(&["bar_0_A_1", "0_a_1"]));
        let both = Nfa::concat(&left, &right);
        assert!(both.accepts(&["bar_0_A_1", "bar_0_C_1", "0_a_1", "bar_1_B_2", "1_b_2"]));
        assert!(!both.accepts(&["bar_0_A_1", "bar_0_C_1", "0_a_1"]));
    }

    #[test]
    fn chains_precondition_errors() {
        let wide = grammar("axiom S ; S -> \"a\" \"b\" \"c\" ;");
        let a = trimmed(&wide, "a b c");
        assert!(matches!(chains_nfa(&a, 0), Err(DtdError::NotBinarized(_, 3))));
        let nullable = grammar("axiom S ; S -> A \"b\" ; A -> | \"a\" ;");
        let b = trimmed(&nullable, "b");
        assert!(matches!(chains_nfa(&b, 0), Err(DtdError::NotEpsilonFree(_))));
    }

    #[test]
    fn rotation_of_unit_chain_tree() {
        let g = grammar("axiom S ; S -> A ; A -> B ; B -> \"a\" \"b\" ;");
        let a = trimmed(&g, "a b");
        let rot = rotate_epsfree(&a, &EvalCtx::from_cfg(&g)).unwrap();
        assert!(is_nonrecursive(&rot.dtd));
        let (trees, cut) = collect_trees(&a, 10);
        assert!(!cut);
        assert_eq!(trees.len(), 1);
        let image = rotate_tree(&a, &trees[0]).unwrap();
        let expect = Tree::node(
            "top",
            vec![
                Tree::leaf("bar_0_S_2"),
                Tree::leaf("bar_0_A_2"),
                Tree::node("0_B_2", vec![Tree::leaf("0_a_1"), Tree::leaf("1_b_2")]),
            ],
        );
        assert_eq!(image, expect);
        assert!(dtd_accepts_tree(&rot.dtd, &image));
        assert_rotated_shape(&image);
    }

    #[test]
    fn rotation_rejects_bad_inputs() {
        let g = grammar("axiom S ; S -> A ; A -> B ; B -> \"a\" \"b\" ;");
        let a = trimmed(&g, "a b");
        let mangled = Tree::node("S", vec![Tree::leaf("a"), Tree::leaf("b")]);
        assert!(matches!(rotate_tree(&a, &mangled), Err(DtdError::NotInForest(_))));
        let raw = build_forest_automaton(&g, &words("a b")).unwrap();
        assert!(matches!(
            rotate_epsfree(&raw, &EvalCtx::from_cfg(&g)),
            Err(DtdError::NotTrimmed)
        ));
    }

    #[test]
    fn rotation_of_unit_cycle_language() {
        let g = grammar("axiom S ; S -> S | \"a\" ;");
        let a = trimmed(&g, "a");
        let rot = rotate_epsfree(&a, &EvalCtx::from_cfg(&g)).unwrap();
        assert!(is_nonrecursive(&rot.dtd));
        assert_eq!(count_dtd_trees(&rot.dtd), CountResult::Infinite);
        assert_eq!(count_trees(&a), CountResult::Infinite);
        // the bijection, layer by layer: both enumerators are size-ordered
        let (forest_trees, cut) = collect_trees(&a, 6);
        assert!(cut);
        let rotated: Vec<Tree> =
            forest_trees.iter().map(|t| rotate_tree(&a, t).unwrap()).collect();
        let (dtd_trees, cut) = enumerate_dtd_trees(&rot.dtd, 6);
        assert!(cut);
        assert_eq!(rotated, dtd_trees);
        for t in &rotated {
            assert!(dtd_accepts_tree(&rot.dtd, t));
            assert_rotated_shape(t);
        }
        // the original a-node sits at the root of no parse tree
        let a_at_root = rot.anchored(&NodeFormula::atom("a")).unwrap();
        let ctx = rot.eval_ctx();
        for t in &rotated {
            assert!(!model_check(t, &a_at_root, &ctx).unwrap());
        }
        let s_at_root = rot.anchored(&NodeFormula::atom("S")).unwrap();
        for t in &rotated {
            assert!(model_check(t, &s_at_root, &ctx).unwrap());
        }
    }

    #[test]
    fn rotation_without_unit_rules_is_flat_copy() {
        let g = grammar("axiom S ; S -> \"a\" \"b\" ;");
        let a = trimmed(&g, "a b");
        let rot = rotate_epsfree(&a, &EvalCtx::from_cfg(&g)).unwrap();
        let (trees, _) = collect_trees(&a, 5);
        let image = rotate_tree(&a, &trees[0]).unwrap();
        assert!(dtd_accepts_tree(&rot.dtd, &image));
        // all chains are singletons, so the image is the localized tree
        // under the synthetic root
        let (acyclic, _) =
            dtd_from_acyclic(&localize(&a), &EvalCtx::from_cfg(&g)).unwrap();
        let (plain_trees, _) = enumerate_dtd_trees(&acyclic, 5);
        assert_eq!(image, Tree::node("top", vec![plain_trees[0].clone()]));
    }

    #[test]
    fn relabel_examples() {
        let g = grammar("axiom S ; S -> \"a\" ;");
        let a = trimmed(&g, "a");
        let rot = rotate_epsfree(&a, &EvalCtx::from_cfg(&g)).unwrap();
        let expect = NodeFormula::atom("0_S_1").or(NodeFormula::atom("bar_0_S_1"));
        assert_eq!(rot.transform_node(&NodeFormula::atom("S")).unwrap(), expect);
        assert_eq!(rot.transform_node(&NodeFormula::tt()).unwrap(), NodeFormula::tt());
        assert_eq!(
            rot.transform_node(&NodeFormula::atom("zzz")),
            Err(DtdError::MissingInterpretation("zzz".to_string()))
        );
        let mut interp = PropInterp::default();
        interp.define("p", NodeFormula::atom("q"));
        assert_eq!(
            relabel_formula(&NodeFormula::atom("p").and(NodeFormula::tt()), &interp).unwrap(),
            NodeFormula::atom("q").and(NodeFormula::tt())
        );
        assert_eq!(
            relabel_formula(&NodeFormula::atom("r"), &interp),
            Err(DtdError::MissingInterpretation("r".to_string()))
        );
    }

    /// Barred labels only at leaves; internal non-root nodes are plain with
    /// exactly two plain children.
    fn assert_rotated_shape(t: &Tree) {
        fn walk(t: &Tree, is_root: bool) {
            if t.label.starts_with("bar_") {
                assert!(t.is_leaf(), "barred node with children: {t}");
                return;
            }
            if !t.children.is_empty() && !is_root {
                let plain = t
                    .children
                    .iter()
                    .filter(|c| !c.label.starts_with("bar_"))
                    .count();
                assert_eq!(plain, 2, "internal plain node without two plain children: {t}");
            }
            for c in &t.children {
                walk(c, false);
            }
        }
        assert_eq!(t.label, "top");
        walk(t, true);
    }

    fn transport_instance(g: &Cfg, w: &str, seed: u64) {
        let b = binarize(g);
        let a = trimmed(&b.base, w);
        if a.initial.is_none() {
            return;
        }
        let ctx = EvalCtx::from_cfg(&b.base);
        let rot = rotate_epsfree(&a, &ctx).unwrap();
        assert!(is_nonrecursive(&rot.dtd));
        let (trees, _) = collect_trees(&a, 20);
        let rot_ctx = rot.eval_ctx();
        let mut rng = testgen::rng(seed);
        let atoms: Vec<&str> = ctx.known.iter().map(String::as_str).collect();
        let mut formulas: Vec<NodeFormula> = (0..15)
            .map(|_| testgen::random_node_formula(&mut rng, &atoms, 8))
            .collect();
        let env = MacroEnv::builtins();
        formulas.push(parse_node_formula("<down*> leaf", &env).unwrap());
        formulas.push(parse_node_formula("[down*] (leaf | <down> true)", &env).unwrap());
        formulas.push(parse_node_formula("<down ; right> true", &env).unwrap());
        formulas.push(parse_node_formula("<down ; dfnext> leaf", &env).unwrap());
        let mut images = BTreeSet::new();
        for t in &trees {
            let image = rotate_tree(&a, t).unwrap();
            assert!(dtd_accepts_tree(&rot.dtd, &image));
            assert_rotated_shape(&image);
            assert!(images.insert(image.clone()), "rotation must be injective");
            for f in &formulas {
                let direct = model_check(t, f, &ctx).unwrap();
                let transported = model_check(&image, &rot.anchored(f).unwrap(), &rot_ctx).unwrap();
                assert_eq!(direct, transported, "formula {f} on tree {t}");
            }
        }
    }

    #[test]
    fn transport_on_fixed_instances() {
        transport_instance(
            &grammar("axiom S ; S -> A B ; A -> C ; C -> \"a\" ; B -> \"b\" ;"),
            "a b",
            7,
        );
        transport_instance(&grammar("axiom S ; S -> S | \"a\" ;"), "a", 8);
        transport_instance(
            &grammar(include_str!("../../../fixtures/dangling_else.cfg")),
            "if true then if false then skip else skip",
            9,
        );
        transport_instance(&grammar("axiom S ; S -> S S | \"a\" ;"), "a a a", 10);
    }

    #[test]
    fn transport_on_random_instances() {
        let mut rng = testgen::rng(42);
        let mut done = 0;
        while done < 12 {
            let g = testgen::random_epsfree_cfg(&mut rng, 3);
            let Some(w) = testgen::random_derivation_word(&mut rng, &g, 3) else {
                continue;
            };
            if w.is_empty() {
                continue;
            }
            let seed = 100 + done as u64;
            transport_instance(&g, &w.join(" "), seed);
            done += 1;
        }
    }

    #[test]
    fn rotated_trees_delocalize_back() {
        // round trip through annotation: every enumerated tree is accepted
        let g = grammar("axiom S ; S -> S S | \"a\" ;");
        let a = trimmed(&g, "a a");
        let (trees, _) = collect_trees(&a, 10);
        for t in &trees {
            assert!(accepts_tree(&a, t));
            rotate_tree(&a, t).unwrap();
        }
    }
}
