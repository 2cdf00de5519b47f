//! Emptiness and witness extraction.
//!
//! Candidate streams are scanned left to right. The scanner carries, per
//! automaton state, the subset-minimal sets of right-crossing outcomes
//! Eloise can guarantee when a play enters the scanned prefix from its
//! right edge (its crossing behavior), plus the pending states of the main
//! run suspended at the frontier. Extending the word by one letter is a
//! small parity game over that letter's cell: plays may dip into the prefix
//! (summarized by the behavior), stay forever (decided by parity), die, or
//! cross to the right and become new pending states. Both carried
//! structures live in finite domains, so a memoized breadth-first search
//! over well-shaped streams decides emptiness and returns a shortest
//! witness. Worst-case cost is exponential in the automaton size.

use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::rc::Rc;

use super::game::{neutral_priority, GameBuilder, Owner, ParityGame};
use super::{accepts, Apwa, Dir, StreamWord, Tag, Tf, WRAPPER};

/// One branch crossing the prefix edge rightward: the state it re-enters
/// the frontier cell in, and the minimal priority seen during the excursion.
type Outcome = (usize, u32);
type OutcomeSet = BTreeSet<Outcome>;
type Antichain = BTreeSet<OutcomeSet>;

/// Crossing behavior of a scanned prefix, recorded only for the states the
/// automaton can actually enter a prefix in (leftward transition atoms);
/// every other state's behavior is never consulted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Behavior(BTreeMap<usize, Antichain>);

/// Parity game for one letter cell: entering states play against the
/// letter, excursions to the left are answered by the prefix behavior, and
/// rightward moves land in open exit vertices resolved per query. Vertices
/// are materialized lazily, only for the entry states actually queried.
struct Cell<'a> {
    builder: RefCell<CellBuilder<'a>>,
    /// Per entry state, the induced subgame its plays can reach.
    reaches: RefCell<HashMap<usize, Rc<Reach>>>,
}

/// The fragment of a cell game reachable from one entry vertex, reindexed.
/// A play from the entry can never leave it, so winners agree with the full
/// game; solving the fragment per exit mask is far cheaper.
struct Reach {
    owner: Vec<Owner>,
    priority: Vec<u32>,
    succ: Vec<Vec<usize>>,
    eloise_sink: usize,
    abelard_sink: usize,
    entry: usize,
    exits: Vec<(usize, Outcome)>,
    wins: RefCell<HashMap<Vec<bool>, bool>>,
}

impl Reach {
    fn wins(&self, mask: &[bool]) -> bool {
        if let Some(&w) = self.wins.borrow().get(mask) {
            return w;
        }
        let mut succ = self.succ.clone();
        for ((v, _), ok) in self.exits.iter().zip(mask) {
            succ[*v].push(if *ok { self.eloise_sink } else { self.abelard_sink });
        }
        let game =
            ParityGame { owner: self.owner.clone(), priority: self.priority.clone(), succ };
        let w = game.winners()[self.entry] == Owner::Eloise;
        self.wins.borrow_mut().insert(mask.to_vec(), w);
        w
    }
}

impl<'a> Cell<'a> {
    fn new(a: &'a Apwa, letter: Tag, behavior: Rc<Behavior>) -> Cell<'a> {
        let neutral = neutral_priority(a);
        Cell {
            builder: RefCell::new(CellBuilder {
                a,
                letter,
                behavior,
                b: GameBuilder::new(neutral),
                neutral,
                states: HashMap::new(),
                formulas: HashMap::new(),
                behaviors: HashMap::new(),
                exit_ids: HashMap::new(),
                todo: Vec::new(),
            }),
            reaches: RefCell::new(HashMap::new()),
        }
    }

    fn reach(&self, q: usize) -> Rc<Reach> {
        if let Some(r) = self.reaches.borrow().get(&q) {
            return r.clone();
        }
        let r = {
            let mut builder = self.builder.borrow_mut();
            let entry = builder.entry(q);
            Rc::new(builder.fragment(entry))
        };
        self.reaches.borrow_mut().insert(q, r.clone());
        r
    }

    /// Can Eloise resolve the cell from `q` using only the allowed exits?
    fn wins(&self, q: usize, allow: &dyn Fn(&Outcome) -> bool) -> bool {
        let r = self.reach(q);
        let mask: Vec<bool> = r.exits.iter().map(|(_, o)| allow(o)).collect();
        r.wins(&mask)
    }
}

struct CellBuilder<'a> {
    a: &'a Apwa,
    letter: Tag,
    behavior: Rc<Behavior>,
    b: GameBuilder,
    neutral: u32,
    states: HashMap<(usize, u32), usize>,
    formulas: HashMap<(*const Tf, u32), usize>,
    behaviors: HashMap<(usize, u32), usize>,
    exit_ids: HashMap<Outcome, usize>,
    todo: Vec<(usize, u32)>,
}

impl<'a> CellBuilder<'a> {
    /// Vertex for "at the cell in state `q`, branch minimum `m` so far".
    /// Priorities of state vertices stay the automaton's coloring; the
    /// folded minimum only labels exits.
    fn state(&mut self, q: usize, m: u32) -> usize {
        let m = m.min(self.a.priority[q]);
        if let Some(&v) = self.states.get(&(q, m)) {
            return v;
        }
        let v = self.b.vertex(Owner::Eloise, self.a.priority[q]);
        self.states.insert((q, m), v);
        self.todo.push((q, m));
        v
    }

    fn formula(&mut self, tf: &Tf, m: u32) -> usize {
        let key = (tf as *const Tf, m);
        if let Some(&v) = self.formulas.get(&key) {
            return v;
        }
        let v = match tf {
            Tf::Top => self.b.eloise_sink,
            Tf::Bot => self.b.abelard_sink,
            Tf::Atom(Dir::Stay, q) => self.state(*q, m),
            Tf::Atom(Dir::Right, q) => {
                let label = (*q, m.min(self.a.priority[*q]));
                if let Some(&v) = self.exit_ids.get(&label) {
                    v
                } else {
                    let v = self.b.vertex(Owner::Eloise, self.neutral);
                    self.exit_ids.insert(label, v);
                    v
                }
            }
            Tf::Atom(Dir::Left, q) => self.excursion(*q, m),
            Tf::And(x, y) | Tf::Or(x, y) => {
                let owner =
                    if matches!(tf, Tf::And(..)) { Owner::Abelard } else { Owner::Eloise };
                let v = self.b.vertex(owner, self.neutral);
                self.formulas.insert(key, v);
                let xv = self.formula(x, m);
                self.b.edge(v, xv);
                let yv = self.formula(y, m);
                self.b.edge(v, yv);
                return v;
            }
        };
        self.formulas.insert(key, v);
        v
    }

    /// Dip into the prefix in state `q`: Eloise picks an achievable outcome
    /// set, Abelard follows each crossing branch. The excursion minimum
    /// recurs whenever the surrounding play loops, so it colors the return
    /// vertex.
    fn excursion(&mut self, q: usize, m: u32) -> usize {
        if let Some(&v) = self.behaviors.get(&(q, m)) {
            return v;
        }
        let antichain = self.behavior.0.get(&q).cloned().unwrap_or_default();
        if antichain.is_empty() {
            self.behaviors.insert((q, m), self.b.abelard_sink);
            return self.b.abelard_sink;
        }
        let v = self.b.vertex(Owner::Eloise, self.neutral);
        self.behaviors.insert((q, m), v);
        for outcome_set in antichain {
            if outcome_set.is_empty() {
                let sink = self.b.eloise_sink;
                self.b.edge(v, sink);
                continue;
            }
            let ov = self.b.vertex(Owner::Abelard, self.neutral);
            self.b.edge(v, ov);
            for (q2, m2) in outcome_set {
                let rv = self.b.vertex(Owner::Eloise, m2);
                self.b.edge(ov, rv);
                let sv = self.state(q2, m.min(m2));
                self.b.edge(rv, sv);
            }
        }
        v
    }

    /// Entry vertex for state `q`, materializing everything its plays can
    /// reach. Draining the queue here means every vertex built so far has
    /// its final successor list, so fragments snapshot safely even though
    /// later entries keep growing the arena.
    fn entry(&mut self, q: usize) -> usize {
        let a = self.a;
        let letter = self.letter.clone();
        let v = self.state(q, a.priority[q]);
        while let Some((q, m)) = self.todo.pop() {
            let sv = self.states[&(q, m)];
            match a.delta[q].get(&letter) {
                None => {
                    let sink = self.b.abelard_sink;
                    self.b.edge(sv, sink);
                }
                Some(tf) => {
                    let fv = self.formula(tf, m);
                    self.b.edge(sv, fv);
                }
            }
        }
        v
    }

    /// The fragment of the arena reachable from `entry`, reindexed. A play
    /// from the entry can never leave it, so winners agree with the full
    /// game; solving the fragment per exit mask is far cheaper.
    fn fragment(&self, entry: usize) -> Reach {
        // exit vertices are wired to one of the sinks per query, so both
        // sinks are always part of the fragment
        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut verts: Vec<usize> = Vec::new();
        let add = |v: usize, verts: &mut Vec<usize>, index: &mut HashMap<usize, usize>| {
            *index.entry(v).or_insert_with(|| {
                verts.push(v);
                verts.len() - 1
            })
        };
        add(self.b.eloise_sink, &mut verts, &mut index);
        add(self.b.abelard_sink, &mut verts, &mut index);
        add(entry, &mut verts, &mut index);
        let mut head = 0;
        while head < verts.len() {
            let v = verts[head];
            head += 1;
            for &u in &self.b.succ[v] {
                add(u, &mut verts, &mut index);
            }
        }
        let succ: Vec<Vec<usize>> =
            verts.iter().map(|&v| self.b.succ[v].iter().map(|u| index[u]).collect()).collect();
        let exits: Vec<(usize, Outcome)> = self
            .exit_ids
            .iter()
            .filter_map(|(o, v)| index.get(v).map(|&nv| (nv, *o)))
            .collect();
        Reach {
            owner: verts.iter().map(|&v| self.b.owner[v]).collect(),
            priority: verts.iter().map(|&v| self.b.priority[v]).collect(),
            succ,
            eloise_sink: index[&self.b.eloise_sink],
            abelard_sink: index[&self.b.abelard_sink],
            entry: index[&entry],
            exits,
            wins: RefCell::new(HashMap::new()),
        }
    }
}

/// States that appear under a leftward atom somewhere in the transition
/// table: the only states whose prefix behavior is ever queried.
fn left_entering_states(a: &Apwa) -> BTreeSet<usize> {
    fn walk(tf: &Tf, out: &mut BTreeSet<usize>) {
        match tf {
            Tf::Atom(Dir::Left, q) => {
                out.insert(*q);
            }
            Tf::And(x, y) | Tf::Or(x, y) => {
                walk(x, out);
                walk(y, out);
            }
            _ => {}
        }
    }
    let mut out = BTreeSet::new();
    for row in &a.delta {
        for tf in row.values() {
            walk(tf, &mut out);
        }
    }
    out
}

/// All subset-minimal label sets with which Eloise wins the cell from `q`.
/// Grounded on the exits the entry can reach; the others never fire.
fn minimal_sets<L: Ord + Clone>(
    cell: &Cell,
    q: usize,
    label_of: &dyn Fn(&Outcome) -> L,
) -> BTreeSet<BTreeSet<L>> {
    let ground: BTreeSet<L> = cell.reach(q).exits.iter().map(|(_, o)| label_of(o)).collect();
    let win = |allowed: &BTreeSet<L>| cell.wins(q, &|o| allowed.contains(&label_of(o)));
    let mut results: BTreeSet<BTreeSet<L>> = BTreeSet::new();
    if !win(&ground) {
        return results;
    }
    let mut seen: BTreeSet<BTreeSet<L>> = BTreeSet::new();
    let mut stack: Vec<BTreeSet<L>> = vec![BTreeSet::new()];
    while let Some(banned) = stack.pop() {
        if !seen.insert(banned.clone()) {
            continue;
        }
        let mut base: BTreeSet<L> = ground.difference(&banned).cloned().collect();
        if !win(&base) {
            continue;
        }
        for l in base.clone() {
            let mut cand = base.clone();
            cand.remove(&l);
            if win(&cand) {
                base = cand;
            }
        }
        for l in &base {
            let mut next = banned.clone();
            next.insert(l.clone());
            stack.push(next);
        }
        results.insert(base);
    }
    results
}

struct Scanner<'a> {
    a: &'a Apwa,
    left_states: BTreeSet<usize>,
    behaviors: Vec<Rc<Behavior>>,
    intern: HashMap<Behavior, usize>,
    cells: HashMap<(usize, Tag), Rc<Cell<'a>>>,
    steps: HashMap<(usize, Tag), usize>,
    options: HashMap<(usize, Tag, usize), Rc<BTreeSet<BTreeSet<usize>>>>,
}

impl<'a> Scanner<'a> {
    fn new(a: &'a Apwa) -> Scanner<'a> {
        let left_states = left_entering_states(a);
        // entering the empty prefix walks off the left edge and loses
        let empty = Behavior(left_states.iter().map(|&q| (q, Antichain::new())).collect());
        Scanner {
            a,
            left_states,
            behaviors: vec![Rc::new(empty.clone())],
            intern: HashMap::from([(empty, 0)]),
            cells: HashMap::new(),
            steps: HashMap::new(),
            options: HashMap::new(),
        }
    }

    fn cell(&mut self, bid: usize, letter: &Tag) -> Rc<Cell<'a>> {
        if let Some(c) = self.cells.get(&(bid, letter.clone())) {
            return c.clone();
        }
        let c = Rc::new(Cell::new(self.a, letter.clone(), self.behaviors[bid].clone()));
        self.cells.insert((bid, letter.clone()), c.clone());
        c
    }

    /// Behavior of the prefix extended by `letter`.
    fn step(&mut self, bid: usize, letter: &Tag) -> usize {
        if let Some(&next) = self.steps.get(&(bid, letter.clone())) {
            return next;
        }
        let cell = self.cell(bid, letter);
        let next = Behavior(
            self.left_states
                .iter()
                .map(|&q| (q, minimal_sets(&cell, q, &|o: &Outcome| *o)))
                .collect(),
        );
        let id = if let Some(&id) = self.intern.get(&next) {
            id
        } else {
            self.behaviors.push(Rc::new(next.clone()));
            self.intern.insert(next, self.behaviors.len() - 1);
            self.behaviors.len() - 1
        };
        self.steps.insert((bid, letter.clone()), id);
        id
    }

    /// Minimal sets of next pending states resolving obligation `q`.
    fn obligation(&mut self, bid: usize, letter: &Tag, q: usize) -> Rc<BTreeSet<BTreeSet<usize>>> {
        let key = (bid, letter.clone(), q);
        if let Some(o) = self.options.get(&key) {
            return o.clone();
        }
        let cell = self.cell(bid, letter);
        let o = Rc::new(minimal_sets(&cell, q, &|o: &Outcome| o.0));
        self.options.insert(key, o.clone());
        o
    }
}

/// A search configuration: states suspended at the frontier plus the
/// interned behavior of the scanned prefix.
type Conf = (BTreeSet<usize>, usize);

/// How a configuration was first reached inside its element body: either it
/// is the body's entry, or it extends a predecessor by one complete child
/// element whose inner run went from `inner_start` to `inner_end`.
#[derive(Clone)]
enum Step {
    Start,
    Elem { pred: Conf, label: String, inner_start: Conf, inner_end: Conf },
}

/// Where a run resolved all obligations strictly inside a body, making the
/// prefix up to that point an accepted word.
#[derive(Clone)]
enum Accept {
    OpenHere { pred: Conf, label: String },
    InInner { pred: Conf, label: String, inner_start: Conf },
    CloseHere { pred: Conf, label: String, inner_start: Conf, inner_end: Conf },
}

/// Everything reachable within one element body at a given nesting budget:
/// minimal letter distances with backpointers, plus the shortest in-body
/// resolution if one exists.
struct Summary {
    reach: HashMap<Conf, (usize, Step)>,
    accept: Option<(usize, Accept)>,
}

struct Search<'a> {
    sc: Scanner<'a>,
    labels: Vec<String>,
    memo: HashMap<(usize, Conf), Rc<Summary>>,
}

fn better(cand: usize, acc: &Option<(usize, Accept)>) -> bool {
    acc.as_ref().is_none_or(|(l, _)| cand < *l)
}

impl Search<'_> {
    /// Saturates the configuration graph of one body: transitions are whole
    /// child elements (summarized recursively at `budget - 1`), relaxed in
    /// letter-length order so recorded distances are minimal. Keying bodies
    /// by entry configuration instead of by the surrounding tag stack keeps
    /// the search polynomial in the number of configurations.
    fn explore(&mut self, budget: usize, start: Conf) -> Rc<Summary> {
        let key = (budget, start.clone());
        if let Some(s) = self.memo.get(&key) {
            return s.clone();
        }
        let mut reach: HashMap<Conf, (usize, Step)> = HashMap::new();
        let mut accept: Option<(usize, Accept)> = None;
        reach.insert(start.clone(), (0, Step::Start));
        let mut heap: BinaryHeap<Reverse<(usize, Conf)>> = BinaryHeap::new();
        heap.push(Reverse((0, start.clone())));
        let labels = self.labels.clone();
        while budget > 0 {
            let Some(Reverse((len, conf))) = heap.pop() else { break };
            if reach[&conf].0 < len {
                continue;
            }
            let (p, bid) = (&conf.0, conf.1);
            for label in &labels {
                let open = Tag::Open(label.clone());
                let options: Vec<Rc<BTreeSet<BTreeSet<usize>>>> =
                    p.iter().map(|&q| self.sc.obligation(bid, &open, q)).collect();
                if options.iter().any(|o| o.is_empty()) {
                    continue;
                }
                let bid1 = self.sc.step(bid, &open);
                for p1 in combine_options(&options) {
                    if p1.is_empty() {
                        if better(len + 1, &accept) {
                            accept = Some((
                                len + 1,
                                Accept::OpenHere { pred: conf.clone(), label: label.clone() },
                            ));
                        }
                        continue;
                    }
                    let inner_start = (p1, bid1);
                    let inner = self.explore(budget - 1, inner_start.clone());
                    if let Some((alen, _)) = &inner.accept {
                        if better(len + 1 + alen, &accept) {
                            accept = Some((
                                len + 1 + alen,
                                Accept::InInner {
                                    pred: conf.clone(),
                                    label: label.clone(),
                                    inner_start: inner_start.clone(),
                                },
                            ));
                        }
                    }
                    let inner_reach: Vec<(Conf, usize)> =
                        inner.reach.iter().map(|(c, (l, _))| (c.clone(), *l)).collect();
                    let close = Tag::Close(label.clone());
                    for (iconf, ilen) in inner_reach {
                        let copts: Vec<Rc<BTreeSet<BTreeSet<usize>>>> = iconf
                            .0
                            .iter()
                            .map(|&q| self.sc.obligation(iconf.1, &close, q))
                            .collect();
                        if copts.iter().any(|o| o.is_empty()) {
                            continue;
                        }
                        let bid3 = self.sc.step(iconf.1, &close);
                        let nlen = len + 2 + ilen;
                        for p3 in combine_options(&copts) {
                            if p3.is_empty() {
                                if better(nlen, &accept) {
                                    accept = Some((
                                        nlen,
                                        Accept::CloseHere {
                                            pred: conf.clone(),
                                            label: label.clone(),
                                            inner_start: inner_start.clone(),
                                            inner_end: iconf.clone(),
                                        },
                                    ));
                                }
                                continue;
                            }
                            let nconf = (p3, bid3);
                            if reach.get(&nconf).is_none_or(|(l, _)| nlen < *l) {
                                reach.insert(
                                    nconf.clone(),
                                    (
                                        nlen,
                                        Step::Elem {
                                            pred: conf.clone(),
                                            label: label.clone(),
                                            inner_start: inner_start.clone(),
                                            inner_end: iconf.clone(),
                                        },
                                    ),
                                );
                                heap.push(Reverse((nlen, nconf)));
                            }
                        }
                    }
                }
            }
        }
        let s = Rc::new(Summary { reach, accept });
        self.memo.insert(key, s.clone());
        s
    }

    /// Letters of the body run from `start` to `end`, rebuilt from the
    /// backpointers recorded during exploration.
    fn body_word(&self, budget: usize, start: &Conf, end: &Conf) -> Vec<Tag> {
        let s = self.memo[&(budget, start.clone())].clone();
        let (_, step) = &s.reach[end];
        match step {
            Step::Start => Vec::new(),
            Step::Elem { pred, label, inner_start, inner_end } => {
                let mut w = self.body_word(budget, start, pred);
                w.push(Tag::Open(label.clone()));
                w.extend(self.body_word(budget - 1, inner_start, inner_end));
                w.push(Tag::Close(label.clone()));
                w
            }
        }
    }

    /// Letters from the body start to its recorded in-body resolution.
    fn accept_word(&self, budget: usize, start: &Conf) -> Vec<Tag> {
        let s = self.memo[&(budget, start.clone())].clone();
        let (_, acc) = s.accept.as_ref().expect("accept_word on a body without resolution");
        match acc {
            Accept::OpenHere { pred, label } => {
                let mut w = self.body_word(budget, start, pred);
                w.push(Tag::Open(label.clone()));
                w
            }
            Accept::InInner { pred, label, inner_start } => {
                let mut w = self.body_word(budget, start, pred);
                w.push(Tag::Open(label.clone()));
                w.extend(self.accept_word(budget - 1, inner_start));
                w
            }
            Accept::CloseHere { pred, label, inner_start, inner_end } => {
                let mut w = self.body_word(budget, start, pred);
                w.push(Tag::Open(label.clone()));
                w.extend(self.body_word(budget - 1, inner_start, inner_end));
                w.push(Tag::Close(label.clone()));
                w
            }
        }
    }
}

/// Searches wrapped streams over the automaton's alphabet (element nesting
/// at most `depth_bound`) for an accepted word, shortest first. The witness
/// is re-checked against [`accepts`] before being returned.
pub fn find_accepted(a: &Apwa) -> Option<StreamWord> {
    let open_r = Tag::Open(WRAPPER.to_string());
    let close_r = Tag::Close(WRAPPER.to_string());
    if !a.alphabet.contains(&open_r) || !a.alphabet.contains(&close_r) {
        return None;
    }
    let labels: Vec<String> = a
        .alphabet
        .iter()
        .filter_map(|t| match t {
            Tag::Open(x) if x != WRAPPER => Some(x.clone()),
            _ => None,
        })
        .collect();

    let mut search = Search { sc: Scanner::new(a), labels, memo: HashMap::new() };

    enum TopCand {
        Seed,
        Inner { start: Conf },
        Close { start: Conf, end: Conf },
    }
    let seeds: Vec<BTreeSet<usize>> =
        search.sc.obligation(0, &open_r, a.initial).iter().cloned().collect();
    let bid0 = search.sc.step(0, &open_r);
    let mut best: Option<(usize, TopCand)> = None;
    let consider = |cand: usize, c: TopCand, best: &mut Option<(usize, TopCand)>| {
        if best.as_ref().is_none_or(|(l, _)| cand < *l) {
            *best = Some((cand, c));
        }
    };
    for p0 in seeds {
        if p0.is_empty() {
            // the main run resolved within the opening wrapper tag
            consider(1, TopCand::Seed, &mut best);
            continue;
        }
        let start = (p0, bid0);
        let s = search.explore(a.depth_bound, start.clone());
        if let Some((alen, _)) = &s.accept {
            consider(1 + alen, TopCand::Inner { start: start.clone() }, &mut best);
        }
        let reach: Vec<(Conf, usize)> =
            s.reach.iter().map(|(c, (l, _))| (c.clone(), *l)).collect();
        for (conf, len) in reach {
            let cell = search.sc.cell(conf.1, &close_r);
            // the word ends right after this tag, so no exit is available
            if conf.0.iter().all(|&q| cell.wins(q, &|_| false)) {
                consider(
                    1 + len + 1,
                    TopCand::Close { start: start.clone(), end: conf },
                    &mut best,
                );
            }
        }
    }

    let (_, cand) = best?;
    let mut word = vec![open_r.clone()];
    match cand {
        TopCand::Seed => {}
        TopCand::Inner { start } => word.extend(search.accept_word(a.depth_bound, &start)),
        TopCand::Close { start, end } => {
            word.extend(search.body_word(a.depth_bound, &start, &end));
            word.push(close_r.clone());
        }
    }
    let w = StreamWord(word);
    assert!(accepts(a, &w), "emptiness witness {w} rejected by the acceptance game");
    Some(w)
}

/// Unions of one choice per obligation, deduplicated.
fn combine_options(options: &[Rc<BTreeSet<BTreeSet<usize>>>]) -> BTreeSet<BTreeSet<usize>> {
    let mut acc: BTreeSet<BTreeSet<usize>> = BTreeSet::from([BTreeSet::new()]);
    for o in options {
        let mut next = BTreeSet::new();
        for base in &acc {
            for choice in o.iter() {
                let mut u = base.clone();
                u.extend(choice.iter().copied());
                next.insert(u);
            }
        }
        acc = next;
    }
    acc
}

/// No stream over the alphabet within the automaton's depth bound is
/// accepted.
pub fn is_empty(a: &Apwa) -> bool {
    find_accepted(a).is_none()
}

#[cfg(test)]
mod tests {
    use super::super::{compile_dtd, compile_formula, conjoin, stream_decode};
    use super::*;
    use crate::dtdreduce::{dtd_accepts_tree, enumerate_dtd_trees, Dtd, Nfa};
    use crate::pdl::{model_check, EvalCtx, NodeFormula};
    use crate::testgen;
    use std::collections::BTreeMap;

    fn singleton_dtd() -> Dtd {
        Dtd {
            nonterminals: BTreeSet::from(["S".to_string()]),
            start: "S".to_string(),
            content: BTreeMap::from([("S".to_string(), Nfa::epsilon())]),
        }
    }

    #[test]
    fn witness_for_singleton_dtd() {
        let a = compile_dtd(&singleton_dtd(), 1).unwrap();
        let w = find_accepted(&a).expect("language is nonempty");
        assert_eq!(w.to_string(), "<r> <S> </S> </r>");
        assert!(!is_empty(&a));
    }

    #[test]
    fn bottom_conjunct_is_empty() {
        let d = compile_dtd(&singleton_dtd(), 1).unwrap();
        let n = BTreeSet::from(["S".to_string()]);
        let ctx = EvalCtx::from_labels(n.iter().cloned());
        let f = compile_formula(&NodeFormula::ff(), &n, &ctx, 1).unwrap();
        let both = conjoin(&d, &f).unwrap();
        assert!(is_empty(&both));
        assert!(find_accepted(&both).is_none());
    }

    #[test]
    fn filtered_dtd_witness_decodes_into_language() {
        // two-tree DTD, formula satisfied by exactly one of the trees
        let d = Dtd {
            nonterminals: BTreeSet::from(["S".to_string(), "A".to_string(), "B".to_string()]),
            start: "S".to_string(),
            content: BTreeMap::from([
                (
                    "S".to_string(),
                    Nfa::union(&Nfa::word(&["A".to_string()]), &Nfa::word(&["B".to_string()])),
                ),
                ("A".to_string(), Nfa::epsilon()),
                ("B".to_string(), Nfa::epsilon()),
            ]),
        };
        let da = compile_dtd(&d, 3).unwrap();
        let ctx = EvalCtx::from_labels(d.nonterminals.iter().cloned());
        let wants_b = crate::pdl::parse_node_formula(
            "<down> B",
            &crate::pdl::MacroEnv::builtins(),
        )
        .unwrap();
        let fa = compile_formula(&wants_b, &d.nonterminals, &ctx, 3).unwrap();
        let both = conjoin(&da, &fa).unwrap();
        let w = find_accepted(&both).expect("one tree satisfies the filter");
        let t = stream_decode(&w).unwrap();
        assert!(dtd_accepts_tree(&d, &t));
        assert!(model_check(&t, &wants_b, &ctx).unwrap());
        assert_eq!(t.children[0].label, "B");
    }

    #[test]
    fn random_emptiness_matches_enumeration_oracle() {
        let mut rng = testgen::rng(90);
        let mut nonempty_seen = 0;
        let mut empty_seen = 0;
        for round in 0..25 {
            let d = testgen::random_dtd(&mut rng, 3);
            let depth = d.nonterminals.len();
            let names: Vec<&str> = d.nonterminals.iter().map(String::as_str).collect();
            let f = testgen::random_node_formula(&mut rng, &names, 5);
            let ctx = EvalCtx::from_labels(d.nonterminals.iter().cloned());
            let da = compile_dtd(&d, depth).unwrap();
            let fa = compile_formula(&f, &d.nonterminals, &ctx, depth).unwrap();
            let both = conjoin(&da, &fa).unwrap();
            // star unrolling: trees enumerated with a generous budget; the
            // budget is exact whenever the language is finite
            let (trees, truncated) = enumerate_dtd_trees(&d, 60);
            let oracle = trees.iter().any(|t| model_check(t, &f, &ctx).unwrap());
            let got = find_accepted(&both);
            match got {
                Some(w) => {
                    let t = stream_decode(&w)
                        .unwrap_or_else(|e| panic!("round {round}: witness {w} not a tree: {e}"));
                    assert!(dtd_accepts_tree(&d, &t), "round {round}: witness outside DTD");
                    assert!(
                        model_check(&t, &f, &ctx).unwrap(),
                        "round {round}: witness fails the formula"
                    );
                    nonempty_seen += 1;
                }
                None => {
                    assert!(
                        !oracle,
                        "round {round}: scanner says empty but enumeration found a model"
                    );
                    if !truncated {
                        empty_seen += 1;
                    }
                }
            }
        }
        assert!(nonempty_seen > 0 && empty_seen > 0, "oracle test never exercised both verdicts");
    }
}
