//! Two-way alternating parity word automata over tree streams.
//!
//! Bounded-depth trees are serialized as XML-like tag streams wrapped in a
//! reserved root tag. Node formulas compile inductively into automata whose
//! runs walk the stream in both directions; a DTD compiles into a universal
//! checker. Acceptance on a fixed stream is a parity game; emptiness runs a
//! crossing-behavior scanner that searches over well-shaped streams.

mod emptiness;
mod game;

pub use emptiness::{find_accepted, is_empty};
pub use game::{accepts, accepts_from};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::dtdreduce::{condense, is_nonrecursive, Dtd, Nfa};
use crate::forest::Tree;
use crate::pdl::{desugar_node, Axis, EvalCtx, NodeF, NodeFormula, PathF, PathFormula};

/// Tag name wrapping every stream; no tree label may collide with it.
pub const WRAPPER: &str = "r";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApwaError {
    #[error("unknown atomic proposition `{0}`")]
    UnknownAtom(String),
    #[error("depth bound must be at least 1")]
    InvalidDepth,
    #[error("label `{0}` collides with the reserved wrapper tag")]
    ReservedTag(String),
    #[error("alphabet mismatch")]
    AlphabetMismatch,
    #[error("recursive DTD")]
    RecursiveDtd,
    #[error("bad stream: {0}")]
    BadStream(String),
}

// ---------------------------------------------------------------------------
// Streams

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Open(String),
    Close(String),
}

impl Tag {
    pub fn label(&self) -> &str {
        match self {
            Tag::Open(x) | Tag::Close(x) => x,
        }
    }

    pub fn is_open(&self) -> bool {
        matches!(self, Tag::Open(_))
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Open(x) => write!(f, "<{x}>"),
            Tag::Close(x) => write!(f, "</{x}>"),
        }
    }
}

/// A serialized tree: balanced tags wrapped once in the reserved root tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamWord(pub Vec<Tag>);

impl fmt::Display for StreamWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for t in &self.0 {
            if !first {
                write!(f, " ")?;
            }
            first = false;
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Parses the space-separated `<X>` / `</X>` rendering.
pub fn parse_stream_text(text: &str) -> Result<StreamWord, ApwaError> {
    let mut tags = Vec::new();
    for piece in text.split_whitespace() {
        let inner = piece
            .strip_prefix('<')
            .and_then(|s| s.strip_suffix('>'))
            .ok_or_else(|| ApwaError::BadStream(format!("not a tag: `{piece}`")))?;
        match inner.strip_prefix('/') {
            Some(name) if !name.is_empty() => tags.push(Tag::Close(name.to_string())),
            None if !inner.is_empty() => tags.push(Tag::Open(inner.to_string())),
            _ => return Err(ApwaError::BadStream(format!("not a tag: `{piece}`"))),
        }
    }
    Ok(StreamWord(tags))
}

/// `⟨r⟩ stream(t) ⟨/r⟩` with `stream(f(t₁…tₘ)) = ⟨f⟩ stream(t₁) … stream(tₘ) ⟨/f⟩`.
pub fn stream_encode(t: &Tree) -> Result<StreamWord, ApwaError> {
    fn walk(t: &Tree, out: &mut Vec<Tag>) -> Result<(), ApwaError> {
        if t.label == WRAPPER {
            return Err(ApwaError::ReservedTag(t.label.clone()));
        }
        out.push(Tag::Open(t.label.clone()));
        for c in &t.children {
            walk(c, out)?;
        }
        out.push(Tag::Close(t.label.clone()));
        Ok(())
    }
    let mut tags = vec![Tag::Open(WRAPPER.to_string())];
    walk(t, &mut tags)?;
    tags.push(Tag::Close(WRAPPER.to_string()));
    Ok(StreamWord(tags))
}

/// Left inverse of [`stream_encode`].
pub fn stream_decode(w: &StreamWord) -> Result<Tree, ApwaError> {
    let tags = &w.0;
    if tags.first() != Some(&Tag::Open(WRAPPER.to_string()))
        || tags.last() != Some(&Tag::Close(WRAPPER.to_string()))
    {
        return Err(ApwaError::BadStream("missing root wrapper".to_string()));
    }
    let mut stack: Vec<Tree> = vec![Tree::leaf(WRAPPER)];
    for tag in &tags[1..tags.len() - 1] {
        match tag {
            Tag::Open(x) => {
                if x == WRAPPER {
                    return Err(ApwaError::BadStream("nested wrapper tag".to_string()));
                }
                stack.push(Tree::leaf(x.clone()));
            }
            Tag::Close(x) => {
                if stack.len() < 2 || stack.last().unwrap().label != *x {
                    return Err(ApwaError::BadStream(format!("unmatched `</{x}>`")));
                }
                let done = stack.pop().unwrap();
                stack.last_mut().unwrap().children.push(done);
            }
        }
    }
    if stack.len() != 1 || stack[0].children.len() != 1 {
        return Err(ApwaError::BadStream("not a single balanced tree".to_string()));
    }
    Ok(stack.pop().unwrap().children.pop().unwrap())
}

// ---------------------------------------------------------------------------
// Automata

/// Head movement relative to the current position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dir {
    Left,
    Stay,
    Right,
}

impl Dir {
    pub fn offset(self) -> isize {
        match self {
            Dir::Left => -1,
            Dir::Stay => 0,
            Dir::Right => 1,
        }
    }
}

/// Positive boolean transition formula over `(direction, state)` moves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tf {
    Top,
    Bot,
    Atom(Dir, usize),
    And(Rc<Tf>, Rc<Tf>),
    Or(Rc<Tf>, Rc<Tf>),
}

impl Tf {
    pub fn and(a: Tf, b: Tf) -> Tf {
        match (a, b) {
            (Tf::Top, x) | (x, Tf::Top) => x,
            (Tf::Bot, _) | (_, Tf::Bot) => Tf::Bot,
            (a, b) => Tf::And(Rc::new(a), Rc::new(b)),
        }
    }

    pub fn or(a: Tf, b: Tf) -> Tf {
        match (a, b) {
            (Tf::Bot, x) | (x, Tf::Bot) => x,
            (Tf::Top, _) | (_, Tf::Top) => Tf::Top,
            (a, b) => Tf::Or(Rc::new(a), Rc::new(b)),
        }
    }

    pub fn or_all(fs: impl IntoIterator<Item = Tf>) -> Tf {
        fs.into_iter().fold(Tf::Bot, Tf::or)
    }

    /// Swaps the two lattice operations and the two constants.
    fn dual(&self) -> Tf {
        match self {
            Tf::Top => Tf::Bot,
            Tf::Bot => Tf::Top,
            Tf::Atom(d, q) => Tf::Atom(*d, *q),
            Tf::And(a, b) => Tf::Or(Rc::new(a.dual()), Rc::new(b.dual())),
            Tf::Or(a, b) => Tf::And(Rc::new(a.dual()), Rc::new(b.dual())),
        }
    }

    fn shift_states(&self, off: usize) -> Tf {
        match self {
            Tf::Top => Tf::Top,
            Tf::Bot => Tf::Bot,
            Tf::Atom(d, q) => Tf::Atom(*d, q + off),
            Tf::And(a, b) => Tf::And(Rc::new(a.shift_states(off)), Rc::new(b.shift_states(off))),
            Tf::Or(a, b) => Tf::Or(Rc::new(a.shift_states(off)), Rc::new(b.shift_states(off))),
        }
    }
}

/// Two-way alternating parity word automaton. Runs are trees of moves: at
/// each node the transition formula for the current state and letter is
/// resolved, conjunctions branching universally and disjunctions
/// existentially. A run accepts when every infinite branch has an even
/// minimal recurring priority and every finite branch ends in `Top`; moves
/// off either end of the word are losing.
#[derive(Debug, Clone)]
pub struct Apwa {
    pub alphabet: BTreeSet<Tag>,
    /// Per-state priority; the state count is this vector's length.
    pub priority: Vec<u32>,
    /// Per-state transition table; a missing letter entry means `Bot`.
    pub delta: Vec<BTreeMap<Tag, Tf>>,
    pub initial: usize,
    /// Path-automaton intermediates mark their endpoint states here;
    /// compiled node automata leave it empty.
    pub continuation: BTreeSet<usize>,
    /// Nesting bound the automaton was built for: emptiness explores
    /// streams of element depth at most this (plus the wrapper).
    pub depth_bound: usize,
}

impl Apwa {
    pub fn state_count(&self) -> usize {
        self.priority.len()
    }

    pub fn transition(&self, q: usize, tag: &Tag) -> Tf {
        self.delta[q].get(tag).cloned().unwrap_or(Tf::Bot)
    }
}

// ---------------------------------------------------------------------------
// Compilation of formulas

struct Builder {
    labels: BTreeSet<String>,
    alphabet: BTreeSet<Tag>,
    priority: Vec<u32>,
    delta: Vec<BTreeMap<Tag, Tf>>,
    depth: usize,
}

impl Builder {
    fn new(labels: &BTreeSet<String>, depth: usize) -> Result<Builder, ApwaError> {
        if depth == 0 {
            return Err(ApwaError::InvalidDepth);
        }
        if labels.contains(WRAPPER) {
            return Err(ApwaError::ReservedTag(WRAPPER.to_string()));
        }
        let mut alphabet = BTreeSet::new();
        for x in labels.iter().chain([&WRAPPER.to_string()]) {
            alphabet.insert(Tag::Open(x.clone()));
            alphabet.insert(Tag::Close(x.clone()));
        }
        Ok(Builder {
            labels: labels.clone(),
            alphabet,
            priority: Vec::new(),
            delta: Vec::new(),
            depth,
        })
    }

    fn fresh(&mut self, priority: u32) -> usize {
        self.priority.push(priority);
        self.delta.push(BTreeMap::new());
        self.priority.len() - 1
    }

    fn set(&mut self, q: usize, tag: Tag, f: Tf) {
        self.delta[q].insert(tag, f);
    }

    fn add_or(&mut self, q: usize, tag: &Tag, f: Tf) {
        let old = self.delta[q].remove(tag).unwrap_or(Tf::Bot);
        self.delta[q].insert(tag.clone(), Tf::or(old, f));
    }

    /// Opening tags of actual labels; the wrapper is excluded so that
    /// nothing ever treats the virtual root as a tree node.
    fn openings(&self) -> Vec<Tag> {
        self.labels.iter().map(|x| Tag::Open(x.clone())).collect()
    }

    fn closings(&self) -> Vec<Tag> {
        self.labels.iter().map(|x| Tag::Close(x.clone())).collect()
    }

    /// Fires a path continuation: every endpoint visit at a node's opening
    /// tag may hand over to `target` in place.
    fn fire(&mut self, continuation: &BTreeSet<usize>, target: usize) {
        let opens = self.openings();
        for &c in continuation {
            for tag in &opens {
                self.add_or(c, tag, Tf::Atom(Dir::Stay, target));
            }
        }
    }

    fn import(&mut self, a: &Apwa) -> usize {
        let off = self.priority.len();
        self.priority.extend(a.priority.iter().copied());
        for table in &a.delta {
            let mut shifted = BTreeMap::new();
            for (tag, f) in table {
                shifted.insert(tag.clone(), f.shift_states(off));
            }
            self.delta.push(shifted);
        }
        a.initial + off
    }

    fn node(&mut self, f: &NodeFormula, ctx: &EvalCtx) -> Result<usize, ApwaError> {
        match f.as_ref() {
            NodeF::True => {
                let q = self.fresh(2);
                for tag in self.openings() {
                    self.set(q, tag, Tf::Top);
                }
                Ok(q)
            }
            NodeF::Atom(p) => {
                if !ctx.knows(p) && !ctx.lenient {
                    return Err(ApwaError::UnknownAtom(p.clone()));
                }
                let q = self.fresh(2);
                for x in self.labels.clone() {
                    if ctx.holds(&x, p) {
                        self.set(q, Tag::Open(x), Tf::Top);
                    }
                }
                Ok(q)
            }
            NodeF::Not(inner) => {
                // dual of the subautomaton, guarded so the complement stays
                // confined to node openings
                let sub = compile_bare(inner, &self.labels, ctx, self.depth)?;
                let dualized = dual(&sub);
                let sub_init = self.import(&dualized);
                let guard = self.node(&NodeFormula::tt(), ctx)?;
                let q = self.fresh(2);
                for tag in self.openings() {
                    self.set(
                        q,
                        tag,
                        Tf::and(Tf::Atom(Dir::Stay, guard), Tf::Atom(Dir::Stay, sub_init)),
                    );
                }
                Ok(q)
            }
            NodeF::And(a, b) => {
                let qa = self.node(a, ctx)?;
                let qb = self.node(b, ctx)?;
                let q = self.fresh(2);
                for tag in self.openings() {
                    self.set(q, tag, Tf::and(Tf::Atom(Dir::Stay, qa), Tf::Atom(Dir::Stay, qb)));
                }
                Ok(q)
            }
            NodeF::Diamond(p, a) => {
                let (init, cont) = self.path(p, ctx)?;
                let target = self.node(a, ctx)?;
                self.fire(&cont, target);
                Ok(init)
            }
            // desugaring leaves only the constructors above
            NodeF::False | NodeF::Or(..) | NodeF::Implies(..) | NodeF::Iff(..) | NodeF::Box(..) => {
                unreachable!("compile expects a desugared formula")
            }
        }
    }

    fn path(
        &mut self,
        p: &PathFormula,
        ctx: &EvalCtx,
    ) -> Result<(usize, BTreeSet<usize>), ApwaError> {
        match p.as_ref() {
            PathF::Step(Axis::Down) => Ok(self.step_down()),
            PathF::Step(Axis::Right) => Ok(self.step_right()),
            PathF::Inverse(inner) => match inner.as_ref() {
                PathF::Step(Axis::Down) => Ok(self.step_up()),
                PathF::Step(Axis::Right) => Ok(self.step_left()),
                _ => unreachable!("desugaring pushes inverses onto primitive steps"),
            },
            PathF::Seq(a, b) => {
                let (ia, ca) = self.path(a, ctx)?;
                let (ib, cb) = self.path(b, ctx)?;
                self.fire(&ca, ib);
                Ok((ia, cb))
            }
            PathF::Alt(a, b) => {
                let (ia, ca) = self.path(a, ctx)?;
                let (ib, cb) = self.path(b, ctx)?;
                let q = self.fresh(2);
                for tag in self.openings() {
                    self.set(q, tag, Tf::or(Tf::Atom(Dir::Stay, ia), Tf::Atom(Dir::Stay, ib)));
                }
                Ok((q, ca.union(&cb).copied().collect()))
            }
            PathF::Star(a) => {
                let (ia, mut ca) = self.path(a, ctx)?;
                // any branch looping through the restart forever must reject
                self.priority[ia] = 1;
                let q = self.fresh(2);
                for tag in self.openings() {
                    self.set(q, tag, Tf::Atom(Dir::Stay, ia));
                }
                self.fire(&ca, ia);
                ca.insert(q);
                Ok((q, ca))
            }
            PathF::Test(f) => {
                let target = self.node(f, ctx)?;
                let q = self.fresh(2);
                let qf = self.fresh(2);
                for tag in self.openings() {
                    self.set(
                        q,
                        tag,
                        Tf::and(Tf::Atom(Dir::Stay, qf), Tf::Atom(Dir::Stay, target)),
                    );
                }
                Ok((q, BTreeSet::from([qf])))
            }
        }
    }

    /// Endpoints: openings read at relative element depth 1 (the children).
    fn step_down(&mut self) -> (usize, BTreeSet<usize>) {
        let s = self.fresh(2);
        let g: Vec<usize> = (0..=self.depth).map(|_| self.fresh(2)).collect();
        for tag in self.openings() {
            self.set(s, tag, Tf::Atom(Dir::Right, g[0]));
        }
        for d in 0..=self.depth {
            for tag in self.openings() {
                let f = if d + 1 <= self.depth { Tf::Atom(Dir::Right, g[d + 1]) } else { Tf::Bot };
                self.set(g[d], tag, f);
            }
            if d >= 1 {
                for tag in self.closings() {
                    self.set(g[d], tag, Tf::Atom(Dir::Right, g[d - 1]));
                }
            }
        }
        (s, BTreeSet::from([g[0]]))
    }

    /// Skips the whole subtree, then the next tag is the sibling's opening
    /// (or a closing, in which case there is none).
    fn step_right(&mut self) -> (usize, BTreeSet<usize>) {
        let s = self.fresh(2);
        let t: Vec<usize> = (0..=self.depth).map(|_| self.fresh(2)).collect();
        let f = self.fresh(2);
        for tag in self.openings() {
            self.set(s, tag, Tf::Atom(Dir::Right, t[0]));
        }
        for d in 0..=self.depth {
            for tag in self.openings() {
                let step =
                    if d + 1 <= self.depth { Tf::Atom(Dir::Right, t[d + 1]) } else { Tf::Bot };
                self.set(t[d], tag, step);
            }
            for tag in self.closings() {
                let target = if d >= 1 { t[d - 1] } else { f };
                self.set(t[d], tag, Tf::Atom(Dir::Right, target));
            }
        }
        (s, BTreeSet::from([f]))
    }

    /// Walks left counting unmatched closings; the first opening seen with
    /// none pending is the parent.
    fn step_up(&mut self) -> (usize, BTreeSet<usize>) {
        let s = self.fresh(2);
        let y: Vec<usize> = (0..=self.depth).map(|_| self.fresh(2)).collect();
        for tag in self.openings() {
            self.set(s, tag, Tf::Atom(Dir::Left, y[0]));
        }
        for k in 0..=self.depth {
            for tag in self.closings() {
                let f = if k + 1 <= self.depth { Tf::Atom(Dir::Left, y[k + 1]) } else { Tf::Bot };
                self.set(y[k], tag, f);
            }
            if k >= 1 {
                for tag in self.openings() {
                    self.set(y[k], tag, Tf::Atom(Dir::Left, y[k - 1]));
                }
            }
        }
        (s, BTreeSet::from([y[0]]))
    }

    /// Walks left; the opening that matches the first unmatched closing is
    /// the preceding sibling. An opening with nothing pending is the parent,
    /// so there is no left sibling.
    fn step_left(&mut self) -> (usize, BTreeSet<usize>) {
        let s = self.fresh(2);
        let z: Vec<usize> = (0..=self.depth).map(|_| self.fresh(2)).collect();
        for tag in self.openings() {
            self.set(s, tag, Tf::Atom(Dir::Left, z[0]));
        }
        for k in 0..=self.depth {
            for tag in self.closings() {
                let f = if k + 1 <= self.depth { Tf::Atom(Dir::Left, z[k + 1]) } else { Tf::Bot };
                self.set(z[k], tag, f);
            }
            if k >= 2 {
                for tag in self.openings() {
                    self.set(z[k], tag, Tf::Atom(Dir::Left, z[k - 1]));
                }
            }
        }
        (s, BTreeSet::from([z[1]]))
    }

    fn finish(mut self, initial: usize, continuation: BTreeSet<usize>) -> Apwa {
        // anchor: started on the wrapper the run moves to the root's
        // opening; started anywhere else it begins in place
        let anchor = self.fresh(2);
        self.set(anchor, Tag::Open(WRAPPER.to_string()), Tf::Atom(Dir::Right, initial));
        for tag in self.alphabet.clone() {
            if tag != Tag::Open(WRAPPER.to_string()) {
                self.set(anchor, tag, Tf::Atom(Dir::Stay, initial));
            }
        }
        let mut a = Apwa {
            alphabet: self.alphabet,
            priority: self.priority,
            delta: self.delta,
            initial: anchor,
            continuation,
            depth_bound: self.depth,
        };
        normalize_priorities(&mut a);
        a
    }
}

/// Compiles without the anchor wrapper; used for negation subautomata.
fn compile_bare(
    f: &NodeFormula,
    labels: &BTreeSet<String>,
    ctx: &EvalCtx,
    depth: usize,
) -> Result<Apwa, ApwaError> {
    let mut b = Builder::new(labels, depth)?;
    let init = b.node(f, ctx)?;
    Ok(Apwa {
        alphabet: b.alphabet,
        priority: b.priority,
        delta: b.delta,
        initial: init,
        continuation: BTreeSet::new(),
        depth_bound: depth,
    })
}

/// Compiles a node formula for trees of depth at most `depth` over the
/// label set: started on a node's opening tag the automaton accepts exactly
/// when the formula holds at that node, and started on the stream's first
/// position it checks the tree's root.
pub fn compile_formula(
    f: &NodeFormula,
    labels: &BTreeSet<String>,
    ctx: &EvalCtx,
    depth: usize,
) -> Result<Apwa, ApwaError> {
    let desugared = desugar_node(f);
    let mut b = Builder::new(labels, depth)?;
    let init = b.node(&desugared, ctx)?;
    Ok(b.finish(init, BTreeSet::new()))
}

// ---------------------------------------------------------------------------
// Compilation of DTDs

/// Universal checker for `{stream_encode(t) | t ∈ L(d)}`: a rightward walk
/// spawns, at every opening tag, an NFA simulation of that label's content
/// model over the openings at relative depth 1. The wrapper behaves like a
/// node whose content model is exactly one start symbol. Depth overruns
/// reject, which realizes the depth-bound check.
pub fn compile_dtd(d: &Dtd, depth: usize) -> Result<Apwa, ApwaError> {
    if depth == 0 {
        return Err(ApwaError::InvalidDepth);
    }
    if !is_nonrecursive(d) {
        return Err(ApwaError::RecursiveDtd);
    }
    if d.nonterminals.contains(WRAPPER) {
        return Err(ApwaError::ReservedTag(WRAPPER.to_string()));
    }
    let mut b = Builder::new(&d.nonterminals, depth)?;
    let root_content = Nfa::word(&[d.start.clone()]);

    // checker states: (label, content-NFA state, relative element depth);
    // condensing the content models first keeps the product small
    let mut cell: HashMap<(String, usize, usize), usize> = HashMap::new();
    let mut contents: BTreeMap<String, Nfa> =
        d.content.iter().map(|(k, v)| (k.clone(), condense(v))).collect();
    let wrapper = WRAPPER.to_string();
    contents.insert(wrapper.clone(), root_content);
    for (label, nfa) in &contents {
        for m in 0..nfa.states.len() {
            for dep in 1..=depth + 1 {
                cell.insert((label.clone(), m, dep), b.fresh(2));
            }
        }
    }
    for (label, nfa) in &contents {
        for m in 0..nfa.states.len() {
            for dep in 1..=depth + 1 {
                let q = cell[&(label.clone(), m, dep)];
                if dep == 1 {
                    // openings here are the children: step the NFA
                    for y in &d.nonterminals {
                        let moves = Tf::or_all(nfa.transitions.iter().filter_map(|(p, l, to)| {
                            (*p == m && l == y)
                                .then(|| Tf::Atom(Dir::Right, cell[&(label.clone(), *to, 2)]))
                        }));
                        b.set(q, Tag::Open(y.clone()), moves);
                    }
                    // the matching closing ends the children word
                    let done = if nfa.finals.contains(&m) { Tf::Top } else { Tf::Bot };
                    b.set(q, Tag::Close(label.clone()), done);
                } else {
                    for y in &d.nonterminals {
                        let f = if dep + 1 <= depth + 1 {
                            Tf::Atom(Dir::Right, cell[&(label.clone(), m, dep + 1)])
                        } else {
                            Tf::Bot
                        };
                        b.set(q, Tag::Open(y.clone()), f);
                        b.set(
                            q,
                            Tag::Close(y.clone()),
                            Tf::Atom(Dir::Right, cell[&(label.clone(), m, dep - 1)]),
                        );
                    }
                }
            }
        }
    }

    let spawn = |nfa: &Nfa, label: &str, cell: &HashMap<(String, usize, usize), usize>| {
        Tf::or_all(
            nfa.initial.iter().map(|&m| Tf::Atom(Dir::Right, cell[&(label.to_string(), m, 1)])),
        )
    };

    let walk = b.fresh(2);
    for x in &d.nonterminals {
        let nfa = &contents[x.as_str()];
        b.set(
            walk,
            Tag::Open(x.clone()),
            Tf::and(spawn(nfa, x, &cell), Tf::Atom(Dir::Right, walk)),
        );
        b.set(walk, Tag::Close(x.clone()), Tf::Atom(Dir::Right, walk));
    }
    b.set(walk, Tag::Close(wrapper.clone()), Tf::Top);

    let init = b.fresh(2);
    b.set(
        init,
        Tag::Open(wrapper.clone()),
        Tf::and(spawn(&contents[wrapper.as_str()], &wrapper, &cell), Tf::Atom(Dir::Right, walk)),
    );

    let mut a = Apwa {
        alphabet: b.alphabet,
        priority: b.priority,
        delta: b.delta,
        initial: init,
        continuation: BTreeSet::new(),
        depth_bound: depth,
    };
    normalize_priorities(&mut a);
    Ok(a)
}

// ---------------------------------------------------------------------------
// Boolean operations

/// Complement: swaps the lattice operations and constants in every
/// transition (absent entries become `Top`) and shifts every priority by 1.
pub fn dual(a: &Apwa) -> Apwa {
    let mut delta = Vec::with_capacity(a.delta.len());
    for q in 0..a.state_count() {
        let mut table = BTreeMap::new();
        for tag in &a.alphabet {
            table.insert(tag.clone(), a.transition(q, tag).dual());
        }
        delta.push(table);
    }
    Apwa {
        alphabet: a.alphabet.clone(),
        priority: a.priority.iter().map(|p| p + 1).collect(),
        delta,
        initial: a.initial,
        continuation: a.continuation.clone(),
        depth_bound: a.depth_bound,
    }
}

fn combine(a: &Apwa, b: &Apwa, conjunctive: bool) -> Result<Apwa, ApwaError> {
    if a.alphabet != b.alphabet {
        return Err(ApwaError::AlphabetMismatch);
    }
    let off = a.state_count();
    let mut priority: Vec<u32> = a.priority.clone();
    priority.extend(b.priority.iter().copied());
    let mut delta = a.delta.clone();
    for table in &b.delta {
        let mut shifted = BTreeMap::new();
        for (tag, f) in table {
            shifted.insert(tag.clone(), f.shift_states(off));
        }
        delta.push(shifted);
    }
    let fresh = priority.len();
    priority.push(1);
    let mut table = BTreeMap::new();
    for tag in &a.alphabet {
        let l = Tf::Atom(Dir::Stay, a.initial);
        let r = Tf::Atom(Dir::Stay, b.initial + off);
        table.insert(tag.clone(), if conjunctive { Tf::and(l, r) } else { Tf::or(l, r) });
    }
    delta.push(table);
    let mut out = Apwa {
        alphabet: a.alphabet.clone(),
        priority,
        delta,
        initial: fresh,
        continuation: BTreeSet::new(),
        depth_bound: a.depth_bound.min(b.depth_bound),
    };
    normalize_priorities(&mut out);
    Ok(out)
}

/// Intersection via a fresh universal initial state.
pub fn conjoin(a: &Apwa, b: &Apwa) -> Result<Apwa, ApwaError> {
    combine(a, b, true)
}

/// Union via a fresh existential initial state.
pub fn disjoin(a: &Apwa, b: &Apwa) -> Result<Apwa, ApwaError> {
    combine(a, b, false)
}

/// Gap compression: remaps priorities onto a minimal contiguous-ish range
/// preserving both order and parity, starting from 1 or 2.
pub fn normalize_priorities(a: &mut Apwa) {
    let mut used: Vec<u32> = a.priority.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if used.is_empty() {
        return;
    }
    let mut map = BTreeMap::new();
    let mut cur = if used[0] % 2 == 0 { 2 } else { 1 };
    map.insert(used.remove(0), cur);
    for p in used {
        if p % 2 != cur % 2 {
            cur += 1;
        }
        map.insert(p, cur);
    }
    for p in &mut a.priority {
        *p = map[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdl::{evaluate_node, model_check, parse_node_formula, MacroEnv};
    use crate::testgen;

    fn labels(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn ctx_for(names: &BTreeSet<String>) -> EvalCtx {
        EvalCtx::from_labels(names.iter().cloned())
    }

    fn phi(text: &str) -> NodeFormula {
        parse_node_formula(text, &MacroEnv::builtins()).unwrap()
    }

    /// Opening-tag position of each node in preorder.
    fn opening_positions(w: &StreamWord) -> Vec<usize> {
        w.0.iter()
            .enumerate()
            .filter(|(i, t)| t.is_open() && *i > 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// The nodes of `t` in the same preorder as [`opening_positions`].
    fn preorder_count(t: &Tree) -> usize {
        t.node_count()
    }

    #[test]
    fn stream_round_trip() {
        let t = Tree::node("p", vec![Tree::leaf("q"), Tree::leaf("q")]);
        let w = stream_encode(&t).unwrap();
        assert_eq!(w.to_string(), "<r> <p> <q> </q> <q> </q> </p> </r>");
        assert_eq!(stream_decode(&w).unwrap(), t);
        assert_eq!(parse_stream_text(&w.to_string()).unwrap(), w);
        let single = stream_encode(&Tree::leaf("p")).unwrap();
        assert_eq!(single.to_string(), "<r> <p> </p> </r>");

        let mut rng = testgen::rng(5);
        let names: Vec<&str> = vec!["a", "b", "c"];
        for _ in 0..200 {
            let t = testgen::random_tree(&mut rng, &names, 5);
            let w = stream_encode(&t).unwrap();
            assert_eq!(stream_decode(&w).unwrap(), t);
        }
        assert!(stream_encode(&Tree::leaf("r")).is_err());
        assert!(stream_decode(&parse_stream_text("<r> <a> </r>").unwrap()).is_err());
        assert!(stream_decode(&parse_stream_text("<a> </a>").unwrap()).is_err());
    }

    #[test]
    fn atom_automaton_at_each_position() {
        let n = labels(&["p", "q"]);
        let a = compile_formula(&NodeFormula::atom("p"), &n, &ctx_for(&n), 2).unwrap();
        let w = stream_encode(&Tree::leaf("p")).unwrap();
        // <r> <p> </p> </r>
        assert!(accepts_from(&a, &w, 1));
        assert!(!accepts_from(&a, &w, 2));
        assert!(accepts(&a, &w));
        let w2 = stream_encode(&Tree::leaf("q")).unwrap();
        assert!(!accepts_from(&a, &w2, 1));
        assert!(!accepts(&a, &w2));
    }

    #[test]
    fn truth_rejects_off_nodes() {
        let n = labels(&["p"]);
        let a = compile_formula(&NodeFormula::tt(), &n, &ctx_for(&n), 2).unwrap();
        let w = stream_encode(&Tree::node("p", vec![Tree::leaf("p")])).unwrap();
        // <r> <p> <p> </p> </p> </r>; position 0 delegates to the root
        for pos in [0, 1, 2] {
            assert!(accepts_from(&a, &w, pos), "opening at {pos}");
        }
        for pos in [3, 4, 5] {
            assert!(!accepts_from(&a, &w, pos), "closing at {pos}");
        }
    }

    #[test]
    fn unknown_atom_and_bad_depth_error() {
        let n = labels(&["p"]);
        assert_eq!(
            compile_formula(&NodeFormula::atom("zz"), &n, &ctx_for(&n), 2).unwrap_err(),
            ApwaError::UnknownAtom("zz".to_string())
        );
        assert_eq!(
            compile_formula(&NodeFormula::tt(), &n, &ctx_for(&n), 0).unwrap_err(),
            ApwaError::InvalidDepth
        );
        let bad = labels(&["p", "r"]);
        assert_eq!(
            compile_formula(&NodeFormula::tt(), &bad, &ctx_for(&bad), 2).unwrap_err(),
            ApwaError::ReservedTag("r".to_string())
        );
    }

    /// Full agreement with the tree evaluator, node by node.
    fn assert_matches_evaluator(t: &Tree, f: &NodeFormula, n: &BTreeSet<String>, depth: usize) {
        let ctx = ctx_for(n);
        let a = compile_formula(f, n, &ctx, depth).unwrap();
        let w = stream_encode(t).unwrap();
        let sat = evaluate_node(t, f, &ctx).unwrap();
        let positions = opening_positions(&w);
        assert_eq!(positions.len(), preorder_count(t));
        for (node, pos) in positions.iter().enumerate() {
            assert_eq!(
                accepts_from(&a, &w, *pos),
                sat.contains(node),
                "formula {f} at node {node} of {t}"
            );
        }
        assert_eq!(accepts(&a, &w), model_check(t, f, &ctx).unwrap(), "formula {f} at root of {t}");
    }

    #[test]
    fn axis_automata_match_evaluator() {
        let n = labels(&["a", "b", "c"]);
        let t = Tree::node(
            "a",
            vec![
                Tree::node("b", vec![Tree::leaf("a"), Tree::leaf("c")]),
                Tree::leaf("b"),
            ],
        );
        for text in [
            "<down> true",
            "<down> b",
            "<right> true",
            "<up> true",
            "<up> a",
            "<left> true",
            "<left> <down> a",
            "[down] b",
            "[up] false",
            "root",
            "leaf",
            "first",
            "last",
            "<down*> c",
            "<down ; right> c",
            "[down*] (a | b | c)",
            "<firstchild> b",
            "! <down> a",
        ] {
            assert_matches_evaluator(&t, &phi(text), &n, 4);
        }
    }

    #[test]
    fn document_order_successor_matches_evaluator() {
        // the dangling-else discipline depends on this path macro
        let n = labels(&["a", "b", "c"]);
        let t = Tree::node(
            "a",
            vec![
                Tree::node("b", vec![Tree::leaf("c"), Tree::node("a", vec![Tree::leaf("b")])]),
                Tree::node("c", vec![Tree::leaf("a")]),
            ],
        );
        for text in ["<dfnext> true", "<dfnext> a", "[dfnext] false", "<dfnext ; dfnext> c"] {
            assert_matches_evaluator(&t, &phi(text), &n, 5);
        }
    }

    #[test]
    fn random_formulas_match_evaluator() {
        let mut rng = testgen::rng(77);
        let names: Vec<&str> = vec!["a", "b"];
        let n = labels(&names);
        for round in 0..120 {
            let t = testgen::random_tree(&mut rng, &names, 3);
            let f = testgen::random_node_formula(&mut rng, &names, 7);
            let depth = t.height().max(2);
            let ctx = ctx_for(&n);
            let a = compile_formula(&f, &n, &ctx, depth).unwrap();
            let w = stream_encode(&t).unwrap();
            assert_eq!(
                accepts(&a, &w),
                model_check(&t, &f, &ctx).unwrap(),
                "round {round}: {f} on {t}"
            );
        }
    }

    #[test]
    fn dual_flips_acceptance_pointwise() {
        let mut rng = testgen::rng(78);
        let names: Vec<&str> = vec!["a", "b"];
        let n = labels(&names);
        let ctx = ctx_for(&n);
        for _ in 0..25 {
            let t = testgen::random_tree(&mut rng, &names, 3);
            let f = testgen::random_node_formula(&mut rng, &names, 5);
            let a = compile_formula(&f, &n, &ctx, 3.max(t.height())).unwrap();
            let d = dual(&a);
            let dd = dual(&d);
            let w = stream_encode(&t).unwrap();
            for pos in 0..w.0.len() {
                assert_eq!(accepts_from(&d, &w, pos), !accepts_from(&a, &w, pos));
                assert_eq!(accepts_from(&dd, &w, pos), accepts_from(&a, &w, pos));
            }
        }
    }

    #[test]
    fn conjoin_and_disjoin_agree_with_components() {
        let mut rng = testgen::rng(79);
        let names: Vec<&str> = vec!["a", "b"];
        let n = labels(&names);
        let ctx = ctx_for(&n);
        for _ in 0..40 {
            let t = testgen::random_tree(&mut rng, &names, 3);
            let f = testgen::random_node_formula(&mut rng, &names, 5);
            let g = testgen::random_node_formula(&mut rng, &names, 5);
            let depth = 3.max(t.height());
            let fa = compile_formula(&f, &n, &ctx, depth).unwrap();
            let ga = compile_formula(&g, &n, &ctx, depth).unwrap();
            let both = conjoin(&fa, &ga).unwrap();
            let either = disjoin(&fa, &ga).unwrap();
            let w = stream_encode(&t).unwrap();
            assert_eq!(accepts(&both, &w), accepts(&fa, &w) && accepts(&ga, &w));
            assert_eq!(accepts(&either, &w), accepts(&fa, &w) || accepts(&ga, &w));
        }
        let other = compile_formula(&NodeFormula::tt(), &labels(&["z"]), &ctx_for(&labels(&["z"])), 2)
            .unwrap();
        let one = compile_formula(&NodeFormula::tt(), &n, &ctx, 2).unwrap();
        assert_eq!(conjoin(&one, &other).unwrap_err(), ApwaError::AlphabetMismatch);
    }

    #[test]
    fn compiled_size_is_linear_in_formula() {
        let n = labels(&["a", "b"]);
        let ctx = ctx_for(&n);
        let mut sizes = Vec::new();
        let mut f = NodeFormula::atom("a");
        for _ in 0..6 {
            f = NodeFormula::diamond(PathFormula::down(), f);
            sizes.push(compile_formula(&f, &n, &ctx, 3).unwrap().state_count());
        }
        let deltas: Vec<usize> = sizes.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(deltas.windows(2).all(|w| w[0] == w[1]), "growth not linear: {sizes:?}");
    }

    #[test]
    fn dtd_checker_on_singleton() {
        let dtd = Dtd {
            nonterminals: BTreeSet::from(["S".to_string()]),
            start: "S".to_string(),
            content: BTreeMap::from([("S".to_string(), Nfa::epsilon())]),
        };
        let a = compile_dtd(&dtd, 1).unwrap();
        let good = parse_stream_text("<r> <S> </S> </r>").unwrap();
        assert!(accepts(&a, &good));
        for bad in [
            "<r> </r>",
            "<r> <S> <S> </S> </S> </r>",
            "<r> <S> </S> <S> </S> </r>",
        ] {
            assert!(!accepts(&a, &parse_stream_text(bad).unwrap()), "{bad}");
        }
    }

    #[test]
    fn dtd_checker_matches_enumeration() {
        let mut rng = testgen::rng(80);
        for round in 0..12 {
            let d = testgen::random_dtd(&mut rng, 3);
            let depth = d.nonterminals.len();
            let a = compile_dtd(&d, depth).unwrap();
            let (trees, _) = crate::dtdreduce::enumerate_dtd_trees(&d, 12);
            for t in &trees {
                let w = stream_encode(t).unwrap();
                assert!(accepts(&a, &w), "round {round}: rejected own tree {t}");
            }
            // trees over the same labels that are not in the language
            for _ in 0..6 {
                let names: Vec<&str> = d.nonterminals.iter().map(String::as_str).collect();
                let t = testgen::random_tree(&mut rng, &names, depth.min(3));
                let w = stream_encode(&t).unwrap();
                assert_eq!(
                    accepts(&a, &w),
                    crate::dtdreduce::dtd_accepts_tree(&d, &t),
                    "round {round}: {t}"
                );
            }
        }
    }
}
