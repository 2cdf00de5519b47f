//! PDL on trees: abstract syntax, concrete syntax with macros, evaluation
//! over a single tree (node sets and path relations), root model checking,
//! and syntactic fragment classification.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use crate::forest::Tree;
use crate::grammar::Cfg;

/// The two primitive step directions; `up` and `left` are the inverses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Down,
    Right,
}

/// Node formula constructors. The core after desugaring is
/// atom/true/not/and/diamond; the rest is sugar kept for printing.
#[derive(Debug, PartialEq, Eq, Hash)]
pub enum NodeF {
    True,
    False,
    Atom(String),
    Not(NodeFormula),
    And(NodeFormula, NodeFormula),
    Or(NodeFormula, NodeFormula),
    Implies(NodeFormula, NodeFormula),
    Iff(NodeFormula, NodeFormula),
    Diamond(PathFormula, NodeFormula),
    Box(PathFormula, NodeFormula),
}

/// Path formula constructors: step/seq/alt/star/inverse/test are core;
/// `up` and `left` parse into inverses of the primitive steps.
#[derive(Debug, PartialEq, Eq, Hash)]
pub enum PathF {
    Step(Axis),
    Seq(PathFormula, PathFormula),
    Alt(PathFormula, PathFormula),
    Star(PathFormula),
    Inverse(PathFormula),
    Test(NodeFormula),
}

/// Reference-counted node formula; clones share structure, which the
/// evaluator exploits through pointer-keyed memoization.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeFormula(Rc<NodeF>);

/// Reference-counted path formula.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathFormula(Rc<PathF>);

impl NodeFormula {
    pub fn tt() -> Self {
        NodeFormula(Rc::new(NodeF::True))
    }
    pub fn ff() -> Self {
        NodeFormula(Rc::new(NodeF::False))
    }
    pub fn atom(name: impl AsRef<str>) -> Self {
        NodeFormula(Rc::new(NodeF::Atom(name.as_ref().to_string())))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        NodeFormula(Rc::new(NodeF::Not(self)))
    }
    pub fn and(self, other: Self) -> Self {
        NodeFormula(Rc::new(NodeF::And(self, other)))
    }
    pub fn or(self, other: Self) -> Self {
        NodeFormula(Rc::new(NodeF::Or(self, other)))
    }
    pub fn implies(self, other: Self) -> Self {
        NodeFormula(Rc::new(NodeF::Implies(self, other)))
    }
    pub fn iff(self, other: Self) -> Self {
        NodeFormula(Rc::new(NodeF::Iff(self, other)))
    }
    pub fn diamond(path: PathFormula, f: Self) -> Self {
        NodeFormula(Rc::new(NodeF::Diamond(path, f)))
    }
    pub fn boxed(path: PathFormula, f: Self) -> Self {
        NodeFormula(Rc::new(NodeF::Box(path, f)))
    }

    pub fn as_ref(&self) -> &NodeF {
        &self.0
    }

    fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }
}

impl PathFormula {
    pub fn step(axis: Axis) -> Self {
        PathFormula(Rc::new(PathF::Step(axis)))
    }
    pub fn down() -> Self {
        Self::step(Axis::Down)
    }
    pub fn right() -> Self {
        Self::step(Axis::Right)
    }
    pub fn up() -> Self {
        Self::step(Axis::Down).inverse()
    }
    pub fn left() -> Self {
        Self::step(Axis::Right).inverse()
    }
    pub fn seq(self, other: Self) -> Self {
        PathFormula(Rc::new(PathF::Seq(self, other)))
    }
    pub fn alt(self, other: Self) -> Self {
        PathFormula(Rc::new(PathF::Alt(self, other)))
    }
    pub fn star(self) -> Self {
        PathFormula(Rc::new(PathF::Star(self)))
    }
    pub fn inverse(self) -> Self {
        PathFormula(Rc::new(PathF::Inverse(self)))
    }
    pub fn test(f: NodeFormula) -> Self {
        PathFormula(Rc::new(PathF::Test(f)))
    }

    pub fn as_ref(&self) -> &PathF {
        &self.0
    }

    fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }
}

/// A parsed formula of either sort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sorted {
    Node(NodeFormula),
    Path(PathFormula),
}

/// Left-nested disjunction; the empty case is `false`.
pub fn or_all(fs: impl IntoIterator<Item = NodeFormula>) -> NodeFormula {
    let mut it = fs.into_iter();
    match it.next() {
        None => NodeFormula::ff(),
        Some(first) => it.fold(first, NodeFormula::or),
    }
}

/// Left-nested conjunction; the empty case is `true`.
pub fn and_all(fs: impl IntoIterator<Item = NodeFormula>) -> NodeFormula {
    let mut it = fs.into_iter();
    match it.next() {
        None => NodeFormula::tt(),
        Some(first) => it.fold(first, NodeFormula::and),
    }
}

// ---------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------

// Precedence levels, loosest to tightest; used both by the printer and
// (implicitly, through the parse level order) by the parser:
// 1 <=>   2 =>   3 |   4 &   5 +   6 ;   7 prefix (!, <π>, [π])
// 8 postfix (*, ^-1, ?)   9 atoms

fn fmt_node(f: &NodeFormula, prec: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let my: u8 = match f.as_ref() {
        NodeF::True | NodeF::False | NodeF::Atom(_) => 9,
        NodeF::Not(_) | NodeF::Diamond(..) | NodeF::Box(..) => 7,
        NodeF::And(..) => 4,
        NodeF::Or(..) => 3,
        NodeF::Implies(..) => 2,
        NodeF::Iff(..) => 1,
    };
    let parens = my < prec;
    if parens {
        write!(out, "(")?;
    }
    match f.as_ref() {
        NodeF::True => write!(out, "true")?,
        NodeF::False => write!(out, "false")?,
        NodeF::Atom(p) => write!(out, "{p}")?,
        NodeF::Not(a) => {
            write!(out, "!")?;
            fmt_node(a, 7, out)?;
        }
        NodeF::And(a, b) => {
            fmt_node(a, 4, out)?;
            write!(out, " & ")?;
            fmt_node(b, 5, out)?;
        }
        NodeF::Or(a, b) => {
            fmt_node(a, 3, out)?;
            write!(out, " | ")?;
            fmt_node(b, 4, out)?;
        }
        NodeF::Implies(a, b) => {
            fmt_node(a, 3, out)?;
            write!(out, " => ")?;
            fmt_node(b, 2, out)?;
        }
        NodeF::Iff(a, b) => {
            fmt_node(a, 1, out)?;
            write!(out, " <=> ")?;
            fmt_node(b, 2, out)?;
        }
        NodeF::Diamond(p, a) => {
            write!(out, "<")?;
            fmt_path(p, 0, out)?;
            write!(out, ">")?;
            fmt_node(a, 7, out)?;
        }
        NodeF::Box(p, a) => {
            write!(out, "[")?;
            fmt_path(p, 0, out)?;
            write!(out, "]")?;
            fmt_node(a, 7, out)?;
        }
    }
    if parens {
        write!(out, ")")?;
    }
    Ok(())
}

fn fmt_path(p: &PathFormula, prec: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    // `up` and `left` print as themselves rather than as inverses
    if let PathF::Inverse(q) = p.as_ref() {
        if let PathF::Step(axis) = q.as_ref() {
            return match axis {
                Axis::Down => write!(out, "up"),
                Axis::Right => write!(out, "left"),
            };
        }
    }
    let my: u8 = match p.as_ref() {
        PathF::Step(_) => 9,
        PathF::Seq(..) => 6,
        PathF::Alt(..) => 5,
        PathF::Star(_) | PathF::Inverse(_) | PathF::Test(_) => 8,
    };
    let parens = my < prec;
    if parens {
        write!(out, "(")?;
    }
    match p.as_ref() {
        PathF::Step(Axis::Down) => write!(out, "down")?,
        PathF::Step(Axis::Right) => write!(out, "right")?,
        PathF::Seq(a, b) => {
            fmt_path(a, 6, out)?;
            write!(out, " ; ")?;
            fmt_path(b, 7, out)?;
        }
        PathF::Alt(a, b) => {
            fmt_path(a, 5, out)?;
            write!(out, " + ")?;
            fmt_path(b, 6, out)?;
        }
        PathF::Star(a) => {
            fmt_path(a, 9, out)?;
            write!(out, "*")?;
        }
        PathF::Inverse(a) => {
            fmt_path(a, 9, out)?;
            write!(out, "^-1")?;
        }
        PathF::Test(f) => {
            fmt_node(f, 8, out)?;
            write!(out, "?")?;
        }
    }
    if parens {
        write!(out, ")")?;
    }
    Ok(())
}

impl fmt::Display for NodeFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(self, 0, f)
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_path(self, 0, f)
    }
}

impl fmt::Display for Sorted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sorted::Node(n) => n.fmt(f),
            Sorted::Path(p) => p.fmt(f),
        }
    }
}

// ---------------------------------------------------------------------
// Concrete syntax
// ---------------------------------------------------------------------

/// Formula syntax or sort error, with the 1-based source line.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct FormulaError {
    pub line: usize,
    pub msg: String,
}

fn ferr<T>(line: usize, msg: impl Into<String>) -> Result<T, FormulaError> {
    Err(FormulaError { line, msg: msg.into() })
}

/// Named macro definitions usable inside formulas; holds the built-ins
/// root/leaf/first/last/firstchild/dfnext unless constructed empty.
#[derive(Debug, Clone, Default)]
pub struct MacroEnv {
    defs: BTreeMap<String, Sorted>,
}

impl MacroEnv {
    pub fn empty() -> Self {
        MacroEnv::default()
    }

    /// root ≝ ¬⟨↑⟩⊤, leaf ≝ ¬⟨↓⟩⊤, first ≝ ¬⟨←⟩⊤, last ≝ ¬⟨→⟩⊤,
    /// firstchild ≝ ↓;first?, dfnext ≝ (last?;↑)*;→;(↓;first?)*.
    pub fn builtins() -> Self {
        let mut env = MacroEnv::default();
        let diam_top = |p: PathFormula| NodeFormula::diamond(p, NodeFormula::tt());
        let root = diam_top(PathFormula::up()).not();
        let leaf = diam_top(PathFormula::down()).not();
        let first = diam_top(PathFormula::left()).not();
        let last = diam_top(PathFormula::right()).not();
        let firstchild = PathFormula::down().seq(PathFormula::test(first.clone()));
        let dfnext = PathFormula::test(last.clone())
            .seq(PathFormula::up())
            .star()
            .seq(PathFormula::right())
            .seq(PathFormula::down().seq(PathFormula::test(first.clone())).star());
        env.defs.insert("root".into(), Sorted::Node(root));
        env.defs.insert("leaf".into(), Sorted::Node(leaf));
        env.defs.insert("first".into(), Sorted::Node(first));
        env.defs.insert("last".into(), Sorted::Node(last));
        env.defs.insert("firstchild".into(), Sorted::Path(firstchild));
        env.defs.insert("dfnext".into(), Sorted::Path(dfnext));
        env
    }

    pub fn define(&mut self, name: impl Into<String>, value: Sorted) {
        self.defs.insert(name.into(), value);
    }

    pub fn lookup(&self, name: &str) -> Option<&Sorted> {
        self.defs.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum FTok {
    Ident(String),
    KwTrue,
    KwFalse,
    KwLet,
    Bang,
    Amp,
    Pipe,
    ImpliesOp,
    IffOp,
    LAngle,
    RAngle,
    LBrack,
    RBrack,
    LParen,
    RParen,
    Semi,
    Plus,
    StarOp,
    Quest,
    InvOp,
    EqOp,
}

impl fmt::Display for FTok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FTok::Ident(s) => return write!(f, "`{s}`"),
            FTok::KwTrue => "`true`",
            FTok::KwFalse => "`false`",
            FTok::KwLet => "`let`",
            FTok::Bang => "`!`",
            FTok::Amp => "`&`",
            FTok::Pipe => "`|`",
            FTok::ImpliesOp => "`=>`",
            FTok::IffOp => "`<=>`",
            FTok::LAngle => "`<`",
            FTok::RAngle => "`>`",
            FTok::LBrack => "`[`",
            FTok::RBrack => "`]`",
            FTok::LParen => "`(`",
            FTok::RParen => "`)`",
            FTok::Semi => "`;`",
            FTok::Plus => "`+`",
            FTok::StarOp => "`*`",
            FTok::Quest => "`?`",
            FTok::InvOp => "`^-1`",
            FTok::EqOp => "`=`",
        };
        write!(f, "{s}")
    }
}

fn flex(text: &str) -> Result<Vec<(FTok, usize)>, FormulaError> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut it = text.chars().peekable();
    while let Some(&c) = it.peek() {
        match c {
            '\n' => {
                line += 1;
                it.next();
            }
            _ if c.is_whitespace() => {
                it.next();
            }
            '#' => {
                for c in it.by_ref() {
                    if c == '\n' {
                        line += 1;
                        break;
                    }
                }
            }
            '!' => {
                it.next();
                toks.push((FTok::Bang, line));
            }
            '&' => {
                it.next();
                toks.push((FTok::Amp, line));
            }
            '|' => {
                it.next();
                toks.push((FTok::Pipe, line));
            }
            '<' => {
                it.next();
                if it.peek() == Some(&'=') {
                    it.next();
                    if it.next() != Some('>') {
                        return ferr(line, "expected `<=>`");
                    }
                    toks.push((FTok::IffOp, line));
                } else {
                    toks.push((FTok::LAngle, line));
                }
            }
            '>' => {
                it.next();
                toks.push((FTok::RAngle, line));
            }
            '=' => {
                it.next();
                if it.peek() == Some(&'>') {
                    it.next();
                    toks.push((FTok::ImpliesOp, line));
                } else {
                    toks.push((FTok::EqOp, line));
                }
            }
            '[' => {
                it.next();
                toks.push((FTok::LBrack, line));
            }
            ']' => {
                it.next();
                toks.push((FTok::RBrack, line));
            }
            '(' => {
                it.next();
                toks.push((FTok::LParen, line));
            }
            ')' => {
                it.next();
                toks.push((FTok::RParen, line));
            }
            ';' => {
                it.next();
                toks.push((FTok::Semi, line));
            }
            '+' => {
                it.next();
                toks.push((FTok::Plus, line));
            }
            '*' => {
                it.next();
                toks.push((FTok::StarOp, line));
            }
            '?' => {
                it.next();
                toks.push((FTok::Quest, line));
            }
            '^' => {
                it.next();
                if it.next() == Some('-') && it.next() == Some('1') {
                    toks.push((FTok::InvOp, line));
                } else {
                    return ferr(line, "expected `^-1`");
                }
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = it.peek() {
                    if c.is_whitespace() || "!&|<>=[]();+*?^#".contains(c) {
                        break;
                    }
                    s.push(c);
                    it.next();
                }
                if s.is_empty() {
                    return ferr(line, format!("unexpected character `{c}`"));
                }
                let tok = match s.as_str() {
                    "true" => FTok::KwTrue,
                    "false" => FTok::KwFalse,
                    "let" => FTok::KwLet,
                    _ => FTok::Ident(s),
                };
                toks.push((tok, line));
            }
        }
    }
    Ok(toks)
}

#[derive(Debug, Clone)]
struct Expr {
    kind: ExprKind,
    line: usize,
}

#[derive(Debug, Clone)]
enum ExprKind {
    True,
    False,
    Ident(String),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Iff(Box<Expr>, Box<Expr>),
    Diamond(Box<Expr>, Box<Expr>),
    BoxMod(Box<Expr>, Box<Expr>),
    Seq(Box<Expr>, Box<Expr>),
    Alt(Box<Expr>, Box<Expr>),
    Star(Box<Expr>),
    Inv(Box<Expr>),
    Test(Box<Expr>),
}

struct FParser {
    toks: Vec<(FTok, usize)>,
    pos: usize,
    depth: usize,
    /// Inside a `let` body, `;` at bracket depth 0 ends the body instead of
    /// sequencing; top-level sequences there need parentheses.
    noseq: bool,
    last_line: usize,
}

impl FParser {
    fn peek(&self) -> Option<&FTok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }
    fn line(&self) -> usize {
        self.toks.get(self.pos).map_or(self.last_line, |(_, l)| *l)
    }
    fn bump(&mut self) -> Option<FTok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }
    fn eat(&mut self, t: &FTok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn expect(&mut self, t: FTok) -> Result<(), FormulaError> {
        let line = self.line();
        match self.bump() {
            Some(got) if got == t => Ok(()),
            Some(got) => ferr(line, format!("expected {t}, found {got}")),
            None => ferr(line, format!("expected {t}, found end of input")),
        }
    }

    fn parse_iff(&mut self) -> Result<Expr, FormulaError> {
        let mut l = self.parse_implies()?;
        while self.eat(&FTok::IffOp) {
            let line = l.line;
            let r = self.parse_implies()?;
            l = Expr { kind: ExprKind::Iff(Box::new(l), Box::new(r)), line };
        }
        Ok(l)
    }

    fn parse_implies(&mut self) -> Result<Expr, FormulaError> {
        let l = self.parse_or()?;
        if self.eat(&FTok::ImpliesOp) {
            let line = l.line;
            let r = self.parse_implies()?;
            return Ok(Expr { kind: ExprKind::Implies(Box::new(l), Box::new(r)), line });
        }
        Ok(l)
    }

    fn parse_or(&mut self) -> Result<Expr, FormulaError> {
        let mut l = self.parse_and()?;
        while self.eat(&FTok::Pipe) {
            let line = l.line;
            let r = self.parse_and()?;
            l = Expr { kind: ExprKind::Or(Box::new(l), Box::new(r)), line };
        }
        Ok(l)
    }

    fn parse_and(&mut self) -> Result<Expr, FormulaError> {
        let mut l = self.parse_alt()?;
        while self.eat(&FTok::Amp) {
            let line = l.line;
            let r = self.parse_alt()?;
            l = Expr { kind: ExprKind::And(Box::new(l), Box::new(r)), line };
        }
        Ok(l)
    }

    fn parse_alt(&mut self) -> Result<Expr, FormulaError> {
        let mut l = self.parse_seq()?;
        while self.eat(&FTok::Plus) {
            let line = l.line;
            let r = self.parse_seq()?;
            l = Expr { kind: ExprKind::Alt(Box::new(l), Box::new(r)), line };
        }
        Ok(l)
    }

    fn parse_seq(&mut self) -> Result<Expr, FormulaError> {
        let mut l = self.parse_prefix()?;
        while !(self.noseq && self.depth == 0) && self.eat(&FTok::Semi) {
            let line = l.line;
            let r = self.parse_prefix()?;
            l = Expr { kind: ExprKind::Seq(Box::new(l), Box::new(r)), line };
        }
        Ok(l)
    }

    fn parse_prefix(&mut self) -> Result<Expr, FormulaError> {
        let line = self.line();
        match self.peek() {
            Some(FTok::Bang) => {
                self.pos += 1;
                let e = self.parse_prefix()?;
                Ok(Expr { kind: ExprKind::Not(Box::new(e)), line })
            }
            Some(FTok::LAngle) => {
                self.pos += 1;
                self.depth += 1;
                let p = self.parse_iff()?;
                self.expect(FTok::RAngle)?;
                self.depth -= 1;
                let f = self.parse_prefix()?;
                Ok(Expr { kind: ExprKind::Diamond(Box::new(p), Box::new(f)), line })
            }
            Some(FTok::LBrack) => {
                self.pos += 1;
                self.depth += 1;
                let p = self.parse_iff()?;
                self.expect(FTok::RBrack)?;
                self.depth -= 1;
                let f = self.parse_prefix()?;
                Ok(Expr { kind: ExprKind::BoxMod(Box::new(p), Box::new(f)), line })
            }
            _ => self.parse_postfix(),
        }
    }

    fn parse_postfix(&mut self) -> Result<Expr, FormulaError> {
        let mut e = self.parse_atom()?;
        loop {
            let line = e.line;
            if self.eat(&FTok::StarOp) {
                e = Expr { kind: ExprKind::Star(Box::new(e)), line };
            } else if self.eat(&FTok::InvOp) {
                e = Expr { kind: ExprKind::Inv(Box::new(e)), line };
            } else if self.eat(&FTok::Quest) {
                e = Expr { kind: ExprKind::Test(Box::new(e)), line };
            } else {
                return Ok(e);
            }
        }
    }

    fn parse_atom(&mut self) -> Result<Expr, FormulaError> {
        let line = self.line();
        match self.bump() {
            Some(FTok::KwTrue) => Ok(Expr { kind: ExprKind::True, line }),
            Some(FTok::KwFalse) => Ok(Expr { kind: ExprKind::False, line }),
            Some(FTok::Ident(s)) => Ok(Expr { kind: ExprKind::Ident(s), line }),
            Some(FTok::LParen) => {
                self.depth += 1;
                let e = self.parse_iff()?;
                self.expect(FTok::RParen)?;
                self.depth -= 1;
                Ok(e)
            }
            Some(t) => ferr(line, format!("expected a formula, found {t}")),
            None => ferr(line, "expected a formula, found end of input"),
        }
    }
}

const STEP_NAMES: [&str; 4] = ["down", "up", "left", "right"];

fn elab_node(e: &Expr, env: &MacroEnv) -> Result<NodeFormula, FormulaError> {
    match &e.kind {
        ExprKind::True => Ok(NodeFormula::tt()),
        ExprKind::False => Ok(NodeFormula::ff()),
        ExprKind::Ident(s) => {
            if STEP_NAMES.contains(&s.as_str()) {
                return ferr(e.line, format!("`{s}` is a path step, not a node formula"));
            }
            match env.lookup(s) {
                Some(Sorted::Node(f)) => Ok(f.clone()),
                Some(Sorted::Path(_)) => {
                    ferr(e.line, format!("macro `{s}` is a path, used as a node formula"))
                }
                None => Ok(NodeFormula::atom(s)),
            }
        }
        ExprKind::Not(a) => Ok(elab_node(a, env)?.not()),
        ExprKind::And(a, b) => Ok(elab_node(a, env)?.and(elab_node(b, env)?)),
        ExprKind::Or(a, b) => Ok(elab_node(a, env)?.or(elab_node(b, env)?)),
        ExprKind::Implies(a, b) => Ok(elab_node(a, env)?.implies(elab_node(b, env)?)),
        ExprKind::Iff(a, b) => Ok(elab_node(a, env)?.iff(elab_node(b, env)?)),
        ExprKind::Diamond(p, a) => {
            Ok(NodeFormula::diamond(elab_path(p, env)?, elab_node(a, env)?))
        }
        ExprKind::BoxMod(p, a) => {
            Ok(NodeFormula::boxed(elab_path(p, env)?, elab_node(a, env)?))
        }
        ExprKind::Seq(..) | ExprKind::Alt(..) | ExprKind::Star(_) | ExprKind::Inv(_)
        | ExprKind::Test(_) => {
            ferr(e.line, "path formula used where a node formula is expected")
        }
    }
}

fn elab_path(e: &Expr, env: &MacroEnv) -> Result<PathFormula, FormulaError> {
    match &e.kind {
        ExprKind::Ident(s) => match s.as_str() {
            "down" => Ok(PathFormula::down()),
            "right" => Ok(PathFormula::right()),
            "up" => Ok(PathFormula::up()),
            "left" => Ok(PathFormula::left()),
            _ => match env.lookup(s) {
                Some(Sorted::Path(p)) => Ok(p.clone()),
                Some(Sorted::Node(_)) => ferr(
                    e.line,
                    format!("macro `{s}` is a node formula; write `{s}?` to use it as a test"),
                ),
                None => ferr(
                    e.line,
                    format!("unknown path `{s}` (write `{s}?` to test the atom `{s}`)"),
                ),
            },
        },
        ExprKind::Seq(a, b) => Ok(elab_path(a, env)?.seq(elab_path(b, env)?)),
        ExprKind::Alt(a, b) => Ok(elab_path(a, env)?.alt(elab_path(b, env)?)),
        ExprKind::Star(a) => Ok(elab_path(a, env)?.star()),
        ExprKind::Inv(a) => Ok(elab_path(a, env)?.inverse()),
        ExprKind::Test(a) => Ok(PathFormula::test(elab_node(a, env)?)),
        _ => ferr(e.line, "node formula used where a path is expected (append `?` for a test)"),
    }
}

fn elab_any(e: &Expr, env: &MacroEnv) -> Result<Sorted, FormulaError> {
    match elab_node(e, env) {
        Ok(n) => Ok(Sorted::Node(n)),
        Err(node_err) => match elab_path(e, env) {
            Ok(p) => Ok(Sorted::Path(p)),
            Err(_) => Err(node_err),
        },
    }
}

/// Parses formula text: zero or more `let NAME = body ;` definitions
/// followed by one formula of either sort. `env` seeds the macro
/// environment (normally [`MacroEnv::builtins`]); definitions in the text
/// extend a local copy. A `let` body with a top-level path sequence must
/// be parenthesized, since `;` terminates the definition.
pub fn parse_formula_text(text: &str, env: &MacroEnv) -> Result<Sorted, FormulaError> {
    let toks = flex(text)?;
    let last_line = toks.last().map_or(1, |(_, l)| *l);
    let mut p = FParser { toks, pos: 0, depth: 0, noseq: false, last_line };
    let mut env = env.clone();
    while p.peek() == Some(&FTok::KwLet) {
        p.pos += 1;
        let line = p.line();
        let name = match p.bump() {
            Some(FTok::Ident(s)) => s,
            Some(t) => return ferr(line, format!("expected macro name, found {t}")),
            None => return ferr(line, "expected macro name"),
        };
        if STEP_NAMES.contains(&name.as_str())
            || ["true", "false", "let"].contains(&name.as_str())
        {
            return ferr(line, format!("`{name}` cannot be redefined"));
        }
        if MacroEnv::builtins().lookup(&name).is_some() {
            return ferr(line, format!("`{name}` redefines a built-in macro"));
        }
        if env.lookup(&name).is_some() && MacroEnv::builtins().lookup(&name).is_none() {
            return ferr(line, format!("duplicate macro `{name}`"));
        }
        p.expect(FTok::EqOp)?;
        p.noseq = true;
        let body = p.parse_iff()?;
        p.noseq = false;
        p.expect(FTok::Semi)?;
        let value = elab_any(&body, &env)?;
        env.define(name, value);
    }
    if p.peek().is_none() {
        return ferr(last_line, "missing formula");
    }
    let body = p.parse_iff()?;
    // tolerate one trailing `;`
    p.eat(&FTok::Semi);
    if let Some(t) = p.peek() {
        let line = p.line();
        return ferr(line, format!("unexpected {t} after the formula"));
    }
    elab_any(&body, &env)
}

/// Like [`parse_formula_text`] but requires the result to be a node formula.
pub fn parse_node_formula(text: &str, env: &MacroEnv) -> Result<NodeFormula, FormulaError> {
    match parse_formula_text(text, env)? {
        Sorted::Node(f) => Ok(f),
        Sorted::Path(_) => ferr(1, "expected a node formula, found a path"),
    }
}

// ---------------------------------------------------------------------
// Desugaring
// ---------------------------------------------------------------------

/// Rewrites into the node core (true/atom/not/and/diamond) and path core
/// with inverses pushed inward until they sit on primitive steps only.
/// Sharing in the input is preserved.
pub fn desugar_node(f: &NodeFormula) -> NodeFormula {
    let mut memo = Desugarer::default();
    memo.node(f)
}

/// Path counterpart of [`desugar_node`].
pub fn desugar_path(p: &PathFormula) -> PathFormula {
    let mut memo = Desugarer::default();
    memo.path(p, false)
}

#[derive(Default)]
struct Desugarer {
    nodes: HashMap<usize, NodeFormula>,
    // keyed by (pointer, inverted-context)
    paths: HashMap<(usize, bool), PathFormula>,
}

impl Desugarer {
    fn node(&mut self, f: &NodeFormula) -> NodeFormula {
        if let Some(d) = self.nodes.get(&f.key()) {
            return d.clone();
        }
        let out = match f.as_ref() {
            NodeF::True | NodeF::Atom(_) => f.clone(),
            NodeF::False => NodeFormula::tt().not(),
            NodeF::Not(a) => self.node(a).not(),
            NodeF::And(a, b) => self.node(a).and(self.node(b)),
            NodeF::Or(a, b) => (self.node(a).not().and(self.node(b).not())).not(),
            NodeF::Implies(a, b) => (self.node(a).and(self.node(b).not())).not(),
            NodeF::Iff(a, b) => {
                let (a, b) = (self.node(a), self.node(b));
                let fwd = (a.clone().and(b.clone().not())).not();
                let bwd = (b.and(a.not())).not();
                fwd.and(bwd)
            }
            NodeF::Diamond(p, a) => NodeFormula::diamond(self.path(p, false), self.node(a)),
            NodeF::Box(p, a) => {
                NodeFormula::diamond(self.path(p, false), self.node(a).not()).not()
            }
        };
        self.nodes.insert(f.key(), out.clone());
        out
    }

    /// `inv` means an enclosing odd number of inversions applies here.
    fn path(&mut self, p: &PathFormula, inv: bool) -> PathFormula {
        if let Some(d) = self.paths.get(&(p.key(), inv)) {
            return d.clone();
        }
        let out = match p.as_ref() {
            PathF::Step(_) if !inv => p.clone(),
            PathF::Step(_) => p.clone().inverse(),
            PathF::Seq(a, b) => {
                if inv {
                    self.path(b, true).seq(self.path(a, true))
                } else {
                    self.path(a, false).seq(self.path(b, false))
                }
            }
            PathF::Alt(a, b) => self.path(a, inv).alt(self.path(b, inv)),
            PathF::Star(a) => self.path(a, inv).star(),
            PathF::Inverse(a) => self.path(a, !inv),
            PathF::Test(f) => PathFormula::test(self.node(f)),
        };
        self.paths.insert((p.key(), inv), out.clone());
        out
    }
}

// ---------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------

/// A set of node addresses of one tree (preorder indices), as a bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSet {
    n: usize,
    words: Vec<u64>,
}

impl NodeSet {
    pub fn empty(n: usize) -> Self {
        NodeSet { n, words: vec![0; n.div_ceil(64)] }
    }
    pub fn full(n: usize) -> Self {
        let mut s = NodeSet::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }
    pub fn universe_len(&self) -> usize {
        self.n
    }
    pub fn insert(&mut self, i: usize) {
        debug_assert!(i < self.n);
        self.words[i / 64] |= 1 << (i % 64);
    }
    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.words[i / 64] & (1 << (i % 64)) != 0
    }
    pub fn union_with(&mut self, other: &NodeSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }
    pub fn intersect_with(&mut self, other: &NodeSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }
    pub fn complement(&self) -> NodeSet {
        let mut out = NodeSet { n: self.n, words: self.words.iter().map(|w| !w).collect() };
        let tail = self.n % 64;
        if tail != 0 {
            if let Some(last) = out.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        out
    }
    pub fn intersects(&self, other: &NodeSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }
    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| self.contains(i))
    }
    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}

/// A binary relation over one tree's node addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRelation {
    n: usize,
    rows: Vec<NodeSet>,
}

impl NodeRelation {
    pub fn empty(n: usize) -> Self {
        NodeRelation { n, rows: (0..n).map(|_| NodeSet::empty(n)).collect() }
    }
    pub fn identity(n: usize) -> Self {
        let mut r = NodeRelation::empty(n);
        for i in 0..n {
            r.rows[i].insert(i);
        }
        r
    }
    pub fn add(&mut self, u: usize, v: usize) {
        self.rows[u].insert(v);
    }
    pub fn contains(&self, u: usize, v: usize) -> bool {
        u < self.n && self.rows[u].contains(v)
    }
    pub fn union_with(&mut self, other: &NodeRelation) {
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            a.union_with(b);
        }
    }
    pub fn transpose(&self) -> NodeRelation {
        let mut out = NodeRelation::empty(self.n);
        for u in 0..self.n {
            for v in self.rows[u].iter() {
                out.add(v, u);
            }
        }
        out
    }
    pub fn compose(&self, other: &NodeRelation) -> NodeRelation {
        let mut out = NodeRelation::empty(self.n);
        for u in 0..self.n {
            let row = &mut out.rows[u];
            for v in self.rows[u].iter() {
                row.union_with(&other.rows[v]);
            }
        }
        out
    }
    /// Reflexive-transitive closure by iterated squaring.
    pub fn reflexive_transitive_closure(&self) -> NodeRelation {
        let mut r = self.clone();
        r.union_with(&NodeRelation::identity(self.n));
        loop {
            let sq = r.compose(&r);
            let mut next = r.clone();
            next.union_with(&sq);
            if next == r {
                return r;
            }
            r = next;
        }
    }
    /// The u with some π-successor in `s`: the diamond modality.
    pub fn sources_into(&self, s: &NodeSet) -> NodeSet {
        let mut out = NodeSet::empty(self.n);
        for u in 0..self.n {
            if self.rows[u].intersects(s) {
                out.insert(u);
            }
        }
        out
    }
    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| self.rows[u].iter().map(move |v| (u, v)))
    }
}

/// Atom interpretation context: which propositions exist, and which ones
/// each label carries. A label without a declared feature set carries
/// exactly its own name.
#[derive(Debug, Clone, Default)]
pub struct EvalCtx {
    pub features: BTreeMap<String, BTreeSet<String>>,
    pub known: BTreeSet<String>,
    /// Map unknown atoms to the empty set instead of erroring.
    pub lenient: bool,
}

impl EvalCtx {
    /// Context for a bare tree: its labels are the known propositions.
    /// Trees produced by a grammar should use [`EvalCtx::from_cfg`] so
    /// declared feature sets apply.
    pub fn for_tree(t: &Tree) -> EvalCtx {
        let mut known = BTreeSet::new();
        fn walk(t: &Tree, known: &mut BTreeSet<String>) {
            known.insert(t.label.clone());
            for c in &t.children {
                walk(c, known);
            }
        }
        walk(t, &mut known);
        known.insert("eps".to_string());
        EvalCtx { features: BTreeMap::new(), known, lenient: false }
    }

    pub fn from_cfg(g: &Cfg) -> EvalCtx {
        let mut known: BTreeSet<String> = g.nonterminals.union(&g.terminals).cloned().collect();
        for set in g.features.values() {
            known.extend(set.iter().cloned());
        }
        known.insert("eps".to_string());
        EvalCtx { features: g.features.clone(), known, lenient: false }
    }

    /// Context over an explicit label vocabulary with default features,
    /// so each label is exactly its own proposition.
    pub fn from_labels(labels: impl IntoIterator<Item = String>) -> EvalCtx {
        let mut known: BTreeSet<String> = labels.into_iter().collect();
        known.insert("eps".to_string());
        EvalCtx { features: BTreeMap::new(), known, lenient: false }
    }

    pub fn lenient(mut self) -> Self {
        self.lenient = true;
        self
    }

    pub fn holds(&self, label: &str, atom: &str) -> bool {
        match self.features.get(label) {
            Some(set) => set.contains(atom),
            None => label == atom,
        }
    }

    pub fn knows(&self, atom: &str) -> bool {
        self.known.contains(atom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown atomic proposition `{0}`")]
    UnknownAtom(String),
}

struct TreeIdx {
    labels: Vec<String>,
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    next_sib: Vec<Option<usize>>,
}

fn index_tree(t: &Tree) -> TreeIdx {
    let mut idx =
        TreeIdx { labels: Vec::new(), children: Vec::new(), parent: Vec::new(), next_sib: Vec::new() };
    fn walk(t: &Tree, parent: Option<usize>, idx: &mut TreeIdx) -> usize {
        let me = idx.labels.len();
        idx.labels.push(t.label.clone());
        idx.children.push(Vec::new());
        idx.parent.push(parent);
        idx.next_sib.push(None);
        let mut kids = Vec::new();
        for c in &t.children {
            let k = walk(c, Some(me), idx);
            kids.push(k);
        }
        for w in kids.windows(2) {
            idx.next_sib[w[0]] = Some(w[1]);
        }
        idx.children[me] = kids;
        me
    }
    walk(t, None, &mut idx);
    idx
}

struct Evaluator<'a> {
    idx: TreeIdx,
    ctx: &'a EvalCtx,
    node_memo: HashMap<usize, NodeSet>,
    path_memo: HashMap<usize, NodeRelation>,
}

impl<'a> Evaluator<'a> {
    fn n(&self) -> usize {
        self.idx.labels.len()
    }

    fn node(&mut self, f: &NodeFormula) -> Result<NodeSet, EvalError> {
        if let Some(s) = self.node_memo.get(&f.key()) {
            return Ok(s.clone());
        }
        let n = self.n();
        let out = match f.as_ref() {
            NodeF::True => NodeSet::full(n),
            NodeF::False => NodeSet::empty(n),
            NodeF::Atom(p) => {
                if !self.ctx.knows(p) && !self.ctx.lenient {
                    return Err(EvalError::UnknownAtom(p.clone()));
                }
                let mut s = NodeSet::empty(n);
                for (i, label) in self.idx.labels.iter().enumerate() {
                    if self.ctx.holds(label, p) {
                        s.insert(i);
                    }
                }
                s
            }
            NodeF::Not(a) => self.node(a)?.complement(),
            NodeF::And(a, b) => {
                let mut s = self.node(a)?;
                s.intersect_with(&self.node(b)?);
                s
            }
            NodeF::Or(a, b) => {
                let mut s = self.node(a)?;
                s.union_with(&self.node(b)?);
                s
            }
            NodeF::Implies(a, b) => {
                let mut s = self.node(a)?.complement();
                s.union_with(&self.node(b)?);
                s
            }
            NodeF::Iff(a, b) => {
                let sa = self.node(a)?;
                let sb = self.node(b)?;
                let mut both = sa.clone();
                both.intersect_with(&sb);
                let mut neither = sa.complement();
                neither.intersect_with(&sb.complement());
                both.union_with(&neither);
                both
            }
            NodeF::Diamond(p, a) => {
                let r = self.path(p)?;
                let s = self.node(a)?;
                r.sources_into(&s)
            }
            NodeF::Box(p, a) => {
                let r = self.path(p)?;
                let s = self.node(a)?.complement();
                r.sources_into(&s).complement()
            }
        };
        self.node_memo.insert(f.key(), out.clone());
        Ok(out)
    }

    fn path(&mut self, p: &PathFormula) -> Result<NodeRelation, EvalError> {
        if let Some(r) = self.path_memo.get(&p.key()) {
            return Ok(r.clone());
        }
        let n = self.n();
        let out = match p.as_ref() {
            PathF::Step(Axis::Down) => {
                let mut r = NodeRelation::empty(n);
                for u in 0..n {
                    for &v in &self.idx.children[u] {
                        r.add(u, v);
                    }
                }
                r
            }
            PathF::Step(Axis::Right) => {
                let mut r = NodeRelation::empty(n);
                for u in 0..n {
                    if let Some(v) = self.idx.next_sib[u] {
                        r.add(u, v);
                    }
                }
                r
            }
            PathF::Seq(a, b) => self.path(a)?.compose(&self.path(b)?),
            PathF::Alt(a, b) => {
                let mut r = self.path(a)?;
                r.union_with(&self.path(b)?);
                r
            }
            PathF::Star(a) => self.path(a)?.reflexive_transitive_closure(),
            PathF::Inverse(a) => self.path(a)?.transpose(),
            PathF::Test(f) => {
                let s = self.node(f)?;
                let mut r = NodeRelation::empty(n);
                for u in s.iter() {
                    r.add(u, u);
                }
                r
            }
        };
        self.path_memo.insert(p.key(), out.clone());
        Ok(out)
    }
}

/// ⟦φ⟧_t: the set of nodes of `t` satisfying `f`.
pub fn evaluate_node(t: &Tree, f: &NodeFormula, ctx: &EvalCtx) -> Result<NodeSet, EvalError> {
    let mut ev = Evaluator {
        idx: index_tree(t),
        ctx,
        node_memo: HashMap::new(),
        path_memo: HashMap::new(),
    };
    ev.node(f)
}

/// ⟦π⟧_t: the relation over nodes of `t` denoted by `p`.
pub fn evaluate_path(t: &Tree, p: &PathFormula, ctx: &EvalCtx) -> Result<NodeRelation, EvalError> {
    let mut ev = Evaluator {
        idx: index_tree(t),
        ctx,
        node_memo: HashMap::new(),
        path_memo: HashMap::new(),
    };
    ev.path(p)
}

/// True iff the root of `t` satisfies `f`.
pub fn model_check(t: &Tree, f: &NodeFormula, ctx: &EvalCtx) -> Result<bool, EvalError> {
    Ok(evaluate_node(t, f, ctx)?.contains(0))
}

// ---------------------------------------------------------------------
// Fragment classification
// ---------------------------------------------------------------------

/// Syntactic fragment classes, tightest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FragmentClass {
    /// All stars are `α*` over a primitive (possibly inverted) step.
    Cr,
    /// All stars are `α*` or `(α;φ?)*`.
    Cp,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fragment {
    pub class: FragmentClass,
    /// No `right`, `left` or `up` step occurs after desugaring.
    pub downward: bool,
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let class = match self.class {
            FragmentClass::Cr => "cr",
            FragmentClass::Cp => "cp",
            FragmentClass::Full => "full",
        };
        let down = if self.downward { "downward" } else { "not downward" };
        write!(f, "{class}, {down}")
    }
}

/// The tightest syntactic fragment containing the desugared formula.
pub fn classify_fragment(f: &Sorted) -> Fragment {
    let mut state = Fragment { class: FragmentClass::Cr, downward: true };
    match f {
        Sorted::Node(n) => scan_node(&desugar_node(n), &mut state),
        Sorted::Path(p) => scan_path(&desugar_path(p), &mut state),
    }
    state
}

pub fn classify_node(f: &NodeFormula) -> Fragment {
    classify_fragment(&Sorted::Node(f.clone()))
}

pub fn classify_path(p: &PathFormula) -> Fragment {
    classify_fragment(&Sorted::Path(p.clone()))
}

fn is_atomic_step(p: &PathFormula) -> bool {
    match p.as_ref() {
        PathF::Step(_) => true,
        PathF::Inverse(q) => matches!(q.as_ref(), PathF::Step(_)),
        _ => false,
    }
}

fn scan_node(f: &NodeFormula, st: &mut Fragment) {
    match f.as_ref() {
        NodeF::True | NodeF::False | NodeF::Atom(_) => {}
        NodeF::Not(a) => scan_node(a, st),
        NodeF::And(a, b) | NodeF::Or(a, b) | NodeF::Implies(a, b) | NodeF::Iff(a, b) => {
            scan_node(a, st);
            scan_node(b, st);
        }
        NodeF::Diamond(p, a) | NodeF::Box(p, a) => {
            scan_path(p, st);
            scan_node(a, st);
        }
    }
}

fn scan_path(p: &PathFormula, st: &mut Fragment) {
    match p.as_ref() {
        PathF::Step(Axis::Down) => {}
        PathF::Step(Axis::Right) => st.downward = false,
        PathF::Inverse(q) => {
            // after desugaring, inverses sit on primitive steps only
            st.downward = false;
            scan_path(q, st);
        }
        PathF::Seq(a, b) | PathF::Alt(a, b) => {
            scan_path(a, st);
            scan_path(b, st);
        }
        PathF::Test(f) => scan_node(f, st),
        PathF::Star(body) => {
            if is_atomic_step(body) {
                scan_path(body, st);
            } else if let PathF::Seq(a, b) = body.as_ref() {
                match (is_atomic_step(a), b.as_ref()) {
                    (true, PathF::Test(f)) => {
                        st.class = st.class.max(FragmentClass::Cp);
                        scan_path(a, st);
                        scan_node(f, st);
                    }
                    _ => {
                        st.class = FragmentClass::Full;
                        scan_path(body, st);
                    }
                }
            } else {
                st.class = FragmentClass::Full;
                scan_path(body, st);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::parse_tree_text;
    use crate::grammar::{grammar_to_pdl, parse_grammar_text};

    fn env() -> MacroEnv {
        MacroEnv::builtins()
    }

    fn node(text: &str) -> NodeFormula {
        parse_node_formula(text, &env()).unwrap()
    }

    fn path(text: &str) -> PathFormula {
        match parse_formula_text(text, &env()).unwrap() {
            Sorted::Path(p) => p,
            Sorted::Node(n) => panic!("expected path, got node {n}"),
        }
    }

    // Fig. 3 of the dangling-else discussion, wrapper-encoded: statement
    // nonterminals live under S wrappers, conditions under C wrappers.
    fn fig3a() -> Tree {
        parse_tree_text(
            "(S (st if (C (ct true)) then (S (se if (C (ct true)) then (S (ss skip)) else (S (ss skip))))))",
        )
        .unwrap()
    }

    fn fig3b() -> Tree {
        parse_tree_text(
            "(S (se if (C (ct true)) then (S (st if (C (ct true)) then (S (ss skip)))) else (S (ss skip))))",
        )
        .unwrap()
    }

    fn fig2a() -> Tree {
        parse_tree_text(
            "(S (NPsuj (d la) (n philosophe)) (VN (clobj le) (claobj lui) (v demande)))",
        )
        .unwrap()
    }

    #[test]
    fn root_macro_expands() {
        assert_eq!(node("root"), node("!<up>true"));
    }

    #[test]
    fn dfnext_macro_expands() {
        let expected = path("((last? ; up)* ; right ; (down ; first?)*)");
        assert_eq!(path("dfnext"), expected);
    }

    #[test]
    fn test_applied_to_path_is_an_error() {
        assert!(parse_formula_text("< down ? >", &env()).is_err());
        assert!(parse_formula_text("<down?>true", &env()).is_err());
    }

    #[test]
    fn let_macros_and_fixture_formulas_parse() {
        let clitics = include_str!("../../../fixtures/clitics.pdl");
        let dangling = include_str!("../../../fixtures/dangling_else.pdl");
        assert!(matches!(parse_formula_text(clitics, &env()).unwrap(), Sorted::Node(_)));
        assert!(matches!(parse_formula_text(dangling, &env()).unwrap(), Sorted::Node(_)));
    }

    #[test]
    fn print_parse_round_trip() {
        let corpus = [
            "true",
            "!a & b | c => d <=> e",
            "<down*>(st & <dfnext>else)",
            "[down ; (right + up)*]!leaf",
            "<(down ; a?)*>b",
            "<left^-1 ; (a & !b)?>true",
            "a => b => c",
            "(a => b) => c",
            "<down ; down ; right>x",
            "<(down ; down) ; right>x",
        ];
        for text in corpus {
            let f = parse_formula_text(text, &env()).unwrap();
            let printed = f.to_string();
            let reparsed = parse_formula_text(&printed, &env()).unwrap();
            assert_eq!(f, reparsed, "round trip failed: {text} printed as {printed}");
        }
        let fixtures = [
            include_str!("../../../fixtures/clitics.pdl"),
            include_str!("../../../fixtures/dangling_else.pdl"),
        ];
        for text in fixtures {
            let f = parse_formula_text(text, &env()).unwrap();
            let reparsed = parse_formula_text(&f.to_string(), &env()).unwrap();
            assert_eq!(f, reparsed);
        }
    }

    #[test]
    fn top_evaluates_to_the_whole_domain() {
        let t = fig3a();
        let n = t.node_count();
        let ctx = EvalCtx::for_tree(&t);
        let s = evaluate_node(&t, &NodeFormula::tt(), &ctx).unwrap();
        assert_eq!(s.count(), n);
        assert_eq!(s, NodeSet::full(n));
    }

    #[test]
    fn dfnext_finds_the_dangling_else() {
        let f = node("st & <dfnext>else");
        let (ta, tb) = (fig3a(), fig3b());
        assert!(evaluate_node(&ta, &f, &EvalCtx::for_tree(&ta)).unwrap().is_empty());
        assert!(!evaluate_node(&tb, &f, &EvalCtx::for_tree(&tb)).unwrap().is_empty());
        let filter = node("!<down*>(st & <dfnext>else)");
        assert!(model_check(&ta, &filter, &EvalCtx::for_tree(&ta)).unwrap());
        assert!(!model_check(&tb, &filter, &EvalCtx::for_tree(&tb)).unwrap());
    }

    #[test]
    fn clitics_formula_holds_on_fig2a() {
        let g = parse_grammar_text(include_str!("../../../fixtures/clitics.cfg")).unwrap();
        let f = node(include_str!("../../../fixtures/clitics.pdl"));
        let t = fig2a();
        assert!(model_check(&t, &f, &EvalCtx::from_cfg(&g)).unwrap());
    }

    #[test]
    fn down_equals_firstchild_then_rights() {
        // ↓ ≡ ↙;→* on a handful of shapes
        let trees = [
            fig3a(),
            fig3b(),
            fig2a(),
            parse_tree_text("(a)").unwrap(),
            parse_tree_text("(a (b (c d e f) g) h)").unwrap(),
        ];
        let lhs = path("down");
        let rhs = path("(down ; first?) ; right*");
        for t in &trees {
            let ctx = EvalCtx::for_tree(t);
            assert_eq!(
                evaluate_path(t, &lhs, &ctx).unwrap(),
                evaluate_path(t, &rhs, &ctx).unwrap()
            );
        }
    }

    #[test]
    fn box_duality_and_inverse_transposition() {
        let t = fig3b();
        let ctx = EvalCtx::for_tree(&t);
        let p = path("down ; (right + up)*");
        let a = node("st | else");
        let boxed = NodeFormula::boxed(p.clone(), a.clone());
        let dual = NodeFormula::diamond(p.clone(), a.clone().not()).not();
        assert_eq!(
            evaluate_node(&t, &boxed, &ctx).unwrap(),
            evaluate_node(&t, &dual, &ctx).unwrap()
        );
        let r = evaluate_path(&t, &p, &ctx).unwrap();
        let rt = evaluate_path(&t, &p.inverse(), &ctx).unwrap();
        assert_eq!(r.transpose(), rt);
    }

    #[test]
    fn star_contains_step_and_identity() {
        let t = fig3a();
        let ctx = EvalCtx::for_tree(&t);
        let r = evaluate_path(&t, &path("down"), &ctx).unwrap();
        let rs = evaluate_path(&t, &path("down*"), &ctx).unwrap();
        let mut lower = r.clone();
        lower.union_with(&NodeRelation::identity(t.node_count()));
        for (u, v) in lower.iter_pairs() {
            assert!(rs.contains(u, v));
        }
    }

    #[test]
    fn unknown_atom_handling() {
        let t = fig3a();
        let ctx = EvalCtx::for_tree(&t);
        let f = node("nosuchatom");
        assert_eq!(
            model_check(&t, &f, &ctx),
            Err(EvalError::UnknownAtom("nosuchatom".into()))
        );
        assert_eq!(model_check(&t, &f, &ctx.clone().lenient()), Ok(false));
    }

    #[test]
    fn desugared_core_is_core_only() {
        fn node_core(f: &NodeFormula) -> bool {
            match f.as_ref() {
                NodeF::True | NodeF::Atom(_) => true,
                NodeF::Not(a) => node_core(a),
                NodeF::And(a, b) => node_core(a) && node_core(b),
                NodeF::Diamond(p, a) => path_core(p) && node_core(a),
                _ => false,
            }
        }
        fn path_core(p: &PathFormula) -> bool {
            match p.as_ref() {
                PathF::Step(_) => true,
                PathF::Inverse(q) => matches!(q.as_ref(), PathF::Step(_)),
                PathF::Seq(a, b) | PathF::Alt(a, b) => path_core(a) && path_core(b),
                PathF::Star(a) => path_core(a),
                PathF::Test(f) => node_core(f),
            }
        }
        let fs = [
            node(include_str!("../../../fixtures/clitics.pdl")),
            node(include_str!("../../../fixtures/dangling_else.pdl")),
            node("[((down ; a?)* ; up^-1)^-1](a <=> false)"),
        ];
        for f in &fs {
            assert!(node_core(&desugar_node(f)), "not core: {}", desugar_node(f));
        }
    }

    #[test]
    fn desugaring_preserves_semantics() {
        let t = fig3b();
        let ctx = EvalCtx::for_tree(&t);
        let fs = [
            node("st | else"),
            node("st => <dfnext>else"),
            node("(leaf <=> !<down>true)"),
            node("[down*](se => <down ; right*>else)"),
            node("<(down ; (st | se)?)*>leaf"),
            node("<(down*)^-1>root"),
        ];
        for f in &fs {
            assert_eq!(
                evaluate_node(&t, f, &ctx).unwrap(),
                evaluate_node(&t, &desugar_node(f), &ctx).unwrap(),
                "desugaring changed semantics of {f}"
            );
        }
    }

    #[test]
    fn fragment_classification() {
        let g = parse_grammar_text(include_str!("../../../fixtures/dangling_else.cfg")).unwrap();
        assert_eq!(
            classify_node(&grammar_to_pdl(&g)),
            Fragment { class: FragmentClass::Cr, downward: false }
        );
        assert_eq!(
            classify_path(&path("dfnext")),
            Fragment { class: FragmentClass::Full, downward: false }
        );
        assert_eq!(
            classify_path(&path("(down ; p?)*")),
            Fragment { class: FragmentClass::Cp, downward: true }
        );
        assert_eq!(
            classify_node(&node("<down*>(a & !b)")),
            Fragment { class: FragmentClass::Cr, downward: true }
        );
        assert_eq!(
            classify_node(&node(include_str!("../../../fixtures/clitics.pdl"))),
            Fragment { class: FragmentClass::Cr, downward: false }
        );
        assert_eq!(
            classify_node(&node("<down ; right>a")),
            Fragment { class: FragmentClass::Cr, downward: false }
        );
        assert_eq!(classify_fragment(&Sorted::Node(node("a"))).class, FragmentClass::Cr);
    }

    #[test]
    fn display_pretty_forms() {
        assert_eq!(node("!<up>true").to_string(), "!<up>true");
        assert_eq!(path("down^-1").to_string(), "up");
        assert_eq!(path("(a & b)? ; down").to_string(), "(a & b)? ; down");
        assert_eq!(node("a & (b | c)").to_string(), "a & (b | c)");
        assert_eq!(node("<down ; right*>!x").to_string(), "<down ; right*>!x");
    }
}
