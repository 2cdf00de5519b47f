//! Context-free grammars: data model, textual format, structural analyses
//! (acyclicity, ε-freeness), binarization with formula transport, and the
//! grammar-correctness formula.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::pdl::{and_all, or_all, Axis, NodeFormula, PathFormula};

/// Names with a special meaning somewhere in the pipeline; user grammars
/// may not declare them as symbols or feature names.
pub const RESERVED_NAMES: [&str; 4] = ["eps", "aux", "bar", "top"];

/// What role a name plays inside one grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Terminal,
    Nonterminal,
    /// The reserved leaf label `eps` standing for the empty word.
    Epsilon,
}

/// One grammar production `lhs -> rhs`. An empty `rhs` is an ε-production.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<String>,
}

impl Production {
    pub fn new(lhs: impl Into<String>, rhs: Vec<String>) -> Self {
        Production { lhs: lhs.into(), rhs }
    }
}

/// A context-free grammar with feature decorations.
///
/// Terminal and nonterminal name sets are disjoint, so productions can
/// store plain names. `features` holds only the explicitly declared
/// entries; undeclared symbols default to the singleton of their own name
/// (see [`Cfg::features_of`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub nonterminals: BTreeSet<String>,
    pub terminals: BTreeSet<String>,
    pub productions: Vec<Production>,
    pub axiom: String,
    pub features: BTreeMap<String, BTreeSet<String>>,
}

impl Cfg {
    pub fn kind_of(&self, name: &str) -> Option<SymbolKind> {
        if name == "eps" {
            Some(SymbolKind::Epsilon)
        } else if self.nonterminals.contains(name) {
            Some(SymbolKind::Nonterminal)
        } else if self.terminals.contains(name) {
            Some(SymbolKind::Terminal)
        } else {
            None
        }
    }

    /// The atomic propositions carried by a node labeled `name`.
    pub fn features_of(&self, name: &str) -> BTreeSet<String> {
        match self.features.get(name) {
            Some(set) => set.clone(),
            None => BTreeSet::from([name.to_string()]),
        }
    }

    pub fn productions_of<'a>(&'a self, lhs: &'a str) -> impl Iterator<Item = &'a Production> {
        self.productions.iter().filter(move |p| p.lhs == lhs)
    }

    /// Checks the structural invariants; used by programmatic builders
    /// (the text parser establishes them on its own).
    pub fn validate(&self) -> Result<(), String> {
        if !self.nonterminals.contains(&self.axiom) {
            return Err(format!("axiom `{}` is not a nonterminal", self.axiom));
        }
        if let Some(name) = self.nonterminals.intersection(&self.terminals).next() {
            return Err(format!("`{name}` is both a terminal and a nonterminal"));
        }
        let mut with_rule: BTreeSet<&str> = BTreeSet::new();
        for p in &self.productions {
            if !self.nonterminals.contains(&p.lhs) {
                return Err(format!("production head `{}` is not a nonterminal", p.lhs));
            }
            with_rule.insert(&p.lhs);
            for x in &p.rhs {
                if x == "eps" {
                    return Err("`eps` may not appear in a right-hand side".into());
                }
                if !self.nonterminals.contains(x) && !self.terminals.contains(x) {
                    return Err(format!("unknown symbol `{x}` in a right-hand side"));
                }
            }
        }
        for n in &self.nonterminals {
            if !with_rule.contains(n.as_str()) {
                return Err(format!("nonterminal `{n}` has no production"));
            }
        }
        for (sym, set) in &self.features {
            if self.kind_of(sym).is_none() || sym == "eps" {
                return Err(format!("feature declaration for unknown symbol `{sym}`"));
            }
            if set.is_empty() {
                return Err(format!("empty feature set for `{sym}`"));
            }
        }
        Ok(())
    }
}

/// Grammar file syntax error, with the 1-based line it was detected on.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Quoted(String),
    Arrow,
    Pipe,
    Semi,
    Eq,
    Quest,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Quoted(s) => write!(f, "\"{s}\""),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Pipe => write!(f, "`|`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Quest => write!(f, "`?`"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            _ if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        line += 1;
                        break;
                    }
                }
            }
            ';' => {
                chars.next();
                toks.push((Tok::Semi, line));
            }
            '|' => {
                chars.next();
                toks.push((Tok::Pipe, line));
            }
            '?' => {
                chars.next();
                toks.push((Tok::Quest, line));
            }
            '=' => {
                chars.next();
                toks.push((Tok::Eq, line));
            }
            '-' => {
                chars.next();
                if chars.peek() == Some(&'>') {
                    chars.next();
                    toks.push((Tok::Arrow, line));
                } else {
                    return err(line, "expected `->`");
                }
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None => return err(line, "unterminated terminal quote"),
                        Some('"') => break,
                        Some('\n') => return err(line, "unterminated terminal quote"),
                        Some(c) if c.is_whitespace() => {
                            return err(line, "terminal contains whitespace")
                        }
                        Some(c) => s.push(c),
                    }
                }
                if s.is_empty() {
                    return err(line, "empty terminal");
                }
                toks.push((Tok::Quoted(s), line));
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || "\"#;|?=-".contains(c) {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                toks.push((Tok::Ident(s), line));
            }
        }
    }
    Ok(toks)
}

struct RawItem {
    name: String,
    quoted: bool,
    optional: bool,
}

/// Parses the grammar file format.
///
/// `X?` optional sugar is expanded eagerly into the 2^k explicit
/// alternatives of each production (duplicates removed, first kept), so the
/// returned grammar is canonical for every downstream algorithm.
pub fn parse_grammar_text(text: &str) -> Result<Cfg, ParseError> {
    let toks = lex(text)?;
    let mut pos = 0usize;
    let last_line = toks.last().map_or(1, |(_, l)| *l);
    let peek = |pos: usize| toks.get(pos).map(|(t, l)| (t, *l));
    let expect_ident = |pos: &mut usize, what: &str| -> Result<(String, usize), ParseError> {
        match peek(*pos) {
            Some((Tok::Ident(s), l)) => {
                *pos += 1;
                Ok((s.clone(), l))
            }
            Some((t, l)) => err(l, format!("expected {what}, found {t}")),
            None => err(last_line, format!("expected {what}, found end of file")),
        }
    };
    let expect_tok = |pos: &mut usize, tok: Tok| -> Result<usize, ParseError> {
        match peek(*pos) {
            Some((t, l)) if *t == tok => {
                *pos += 1;
                Ok(l)
            }
            Some((t, l)) => err(l, format!("expected {tok}, found {t}")),
            None => err(last_line, format!("expected {tok}, found end of file")),
        }
    };

    let mut axiom: Option<String> = None;
    let mut feature_decls: Vec<(String, BTreeSet<String>, usize)> = Vec::new();
    // lhs, alternatives (with optionality flags), line
    let mut raw: Vec<(String, Vec<Vec<RawItem>>, usize)> = Vec::new();

    while let Some((tok, line)) = peek(pos) {
        match tok {
            Tok::Ident(s) if s == "axiom" => {
                pos += 1;
                let (name, l) = expect_ident(&mut pos, "axiom name")?;
                expect_tok(&mut pos, Tok::Semi)?;
                if axiom.is_some() {
                    return err(l, "duplicate axiom declaration");
                }
                axiom = Some(name);
            }
            Tok::Ident(s) if s == "features" => {
                pos += 1;
                let (target, l) = expect_ident(&mut pos, "symbol name")?;
                expect_tok(&mut pos, Tok::Eq)?;
                let mut values = BTreeSet::new();
                while let Some((Tok::Ident(v), _)) = peek(pos) {
                    values.insert(v.clone());
                    pos += 1;
                }
                expect_tok(&mut pos, Tok::Semi)?;
                if values.is_empty() {
                    return err(l, "feature declaration needs at least one proposition");
                }
                feature_decls.push((target, values, l));
            }
            Tok::Ident(_) => {
                let (lhs, line) = expect_ident(&mut pos, "nonterminal")?;
                expect_tok(&mut pos, Tok::Arrow)?;
                let mut alts: Vec<Vec<RawItem>> = vec![Vec::new()];
                loop {
                    match peek(pos) {
                        Some((Tok::Semi, _)) => {
                            pos += 1;
                            break;
                        }
                        Some((Tok::Pipe, _)) => {
                            pos += 1;
                            alts.push(Vec::new());
                        }
                        Some((Tok::Ident(name), _)) => {
                            let name = name.clone();
                            pos += 1;
                            let optional = matches!(peek(pos), Some((Tok::Quest, _)));
                            if optional {
                                pos += 1;
                            }
                            alts.last_mut().unwrap().push(RawItem {
                                name,
                                quoted: false,
                                optional,
                            });
                        }
                        Some((Tok::Quoted(name), l)) => {
                            let name = name.clone();
                            pos += 1;
                            if matches!(peek(pos), Some((Tok::Quest, _))) {
                                return err(l, "`?` applies to nonterminal symbols only");
                            }
                            alts.last_mut().unwrap().push(RawItem {
                                name,
                                quoted: true,
                                optional: false,
                            });
                        }
                        Some((t, l)) => return err(l, format!("unexpected {t} in production")),
                        None => return err(last_line, "unterminated production"),
                    }
                }
                raw.push((lhs, alts, line));
            }
            t => return err(line, format!("expected a declaration, found {t}")),
        }
    }

    let axiom = match axiom {
        Some(a) => a,
        None => return err(last_line, "missing axiom declaration"),
    };

    let nonterminals: BTreeSet<String> = raw.iter().map(|(lhs, _, _)| lhs.clone()).collect();
    let mut terminals: BTreeSet<String> = BTreeSet::new();

    for (lhs, alts, line) in &raw {
        if RESERVED_NAMES.contains(&lhs.as_str()) {
            return err(*line, format!("`{lhs}` is reserved"));
        }
        for alt in alts {
            for item in alt {
                if RESERVED_NAMES.contains(&item.name.as_str()) {
                    return err(*line, format!("`{}` is reserved", item.name));
                }
                if item.quoted {
                    if nonterminals.contains(&item.name) {
                        return err(
                            *line,
                            format!("`{}` is used both quoted and as a left-hand side", item.name),
                        );
                    }
                    terminals.insert(item.name.clone());
                } else if !nonterminals.contains(&item.name) {
                    return err(
                        *line,
                        format!(
                            "undeclared symbol `{}` (unquoted tokens must appear as a left-hand side; terminals must be quoted)",
                            item.name
                        ),
                    );
                }
            }
        }
    }

    if !nonterminals.contains(&axiom) {
        return err(last_line, format!("axiom `{axiom}` has no production"));
    }

    let mut features: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (target, values, line) in feature_decls {
        if RESERVED_NAMES.contains(&target.as_str()) {
            return err(line, format!("`{target}` is reserved"));
        }
        for v in &values {
            if RESERVED_NAMES.contains(&v.as_str()) {
                return err(line, format!("feature name `{v}` is reserved"));
            }
        }
        if !nonterminals.contains(&target) && !terminals.contains(&target) {
            return err(line, format!("feature declaration for unknown symbol `{target}`"));
        }
        if features.insert(target.clone(), values).is_some() {
            return err(line, format!("duplicate features declaration for `{target}`"));
        }
    }

    // Expand optional slots: one alternative per subset of the optional
    // items, all-present first, fully-absent last.
    let mut productions = Vec::new();
    let mut seen: HashSet<(String, Vec<String>)> = HashSet::new();
    for (lhs, alts, line) in raw {
        for alt in alts {
            let opt_slots: Vec<usize> = alt
                .iter()
                .enumerate()
                .filter(|(_, it)| it.optional)
                .map(|(i, _)| i)
                .collect();
            let k = opt_slots.len();
            if k > 16 {
                return err(line, "too many optional symbols in one alternative");
            }
            for mask in (0u32..1 << k).rev() {
                let rhs: Vec<String> = alt
                    .iter()
                    .enumerate()
                    .filter(|(i, it)| {
                        !it.optional
                            || mask & (1 << opt_slots.iter().position(|s| s == i).unwrap()) != 0
                    })
                    .map(|(_, it)| it.name.clone())
                    .collect();
                if seen.insert((lhs.clone(), rhs.clone())) {
                    productions.push(Production::new(lhs.clone(), rhs));
                }
            }
        }
    }

    Ok(Cfg { nonterminals, terminals, productions, axiom, features })
}

/// Renders a grammar in the same file format `parse_grammar_text` reads,
/// one alternative per line, terminals quoted.
pub fn print_grammar(g: &Cfg) -> String {
    let mut out = String::new();
    out.push_str(&format!("axiom {} ;\n", g.axiom));
    for (sym, set) in &g.features {
        out.push_str(&format!(
            "features {sym} = {} ;\n",
            set.iter().cloned().collect::<Vec<_>>().join(" ")
        ));
    }
    for p in &g.productions {
        out.push_str(&p.lhs);
        out.push_str(" ->");
        for x in &p.rhs {
            if g.terminals.contains(x) {
                out.push_str(&format!(" \"{x}\""));
            } else {
                out.push_str(&format!(" {x}"));
            }
        }
        out.push_str(" ;\n");
    }
    out
}

/// The nonterminals that derive the empty word.
pub(crate) fn nullable_set(g: &Cfg) -> BTreeSet<String> {
    let mut nullable: BTreeSet<String> = BTreeSet::new();
    loop {
        let mut changed = false;
        for p in &g.productions {
            if !nullable.contains(&p.lhs) && p.rhs.iter().all(|x| nullable.contains(x)) {
                nullable.insert(p.lhs.clone());
                changed = true;
            }
        }
        if !changed {
            return nullable;
        }
    }
}

/// True iff no nonterminal A derives exactly itself (A ⇒⁺ A).
///
/// A can reproduce itself through `A -> α B β` whenever α and β are both
/// nullable, so the cycle check runs on that nullable-context graph rather
/// than on unit productions alone.
pub fn check_acyclic(g: &Cfg) -> bool {
    let nullable = nullable_set(g);
    let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for p in &g.productions {
        for (i, x) in p.rhs.iter().enumerate() {
            if !g.nonterminals.contains(x) {
                continue;
            }
            let context_nullable = p
                .rhs
                .iter()
                .enumerate()
                .all(|(j, y)| j == i || nullable.contains(y));
            if context_nullable {
                edges.entry(&p.lhs).or_default().insert(x);
            }
        }
    }
    // iterative three-color DFS
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color: BTreeMap<&str, Color> =
        g.nonterminals.iter().map(|n| (n.as_str(), Color::White)).collect();
    for start in g.nonterminals.iter() {
        if color[start.as_str()] != Color::White {
            continue;
        }
        let mut stack: Vec<(&str, bool)> = vec![(start, false)];
        while let Some((node, done)) = stack.pop() {
            if done {
                color.insert(node, Color::Black);
                continue;
            }
            match color[node] {
                Color::Black => continue,
                Color::Gray => continue,
                Color::White => {}
            }
            color.insert(node, Color::Gray);
            stack.push((node, true));
            if let Some(next) = edges.get(node) {
                for m in next {
                    match color[m] {
                        Color::Gray => return false,
                        Color::White => stack.push((m, false)),
                        Color::Black => {}
                    }
                }
            }
        }
    }
    true
}

/// True iff no production has an empty right-hand side.
pub fn check_epsilon_free(g: &Cfg) -> bool {
    g.productions.iter().all(|p| !p.rhs.is_empty())
}

/// A grammar whose productions have right-hand sides of length at most 2
/// (or 3 counting nothing: 0 survives only for ε-productions), produced by
/// right-branching splitting with fresh auxiliary nonterminals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarizedCfg {
    pub base: Cfg,
    /// The fresh nonterminals introduced by splitting.
    pub aux: BTreeSet<String>,
    /// Index of each binarized production -> index of the production of
    /// the source grammar it came from.
    pub origin: BTreeMap<usize, usize>,
}

/// Splits every `A -> X1 … Xk` with k ≥ 3 right-branchingly into
/// `A -> X1 A1; A1 -> X2 A2; …`. Auxiliary symbols carry the single
/// feature `aux` so transported formulas can recognize and skip them.
pub fn binarize(g: &Cfg) -> BinarizedCfg {
    let mut used: BTreeSet<String> =
        g.nonterminals.union(&g.terminals).cloned().collect();
    let mut aux: BTreeSet<String> = BTreeSet::new();
    let mut productions = Vec::new();
    let mut origin = BTreeMap::new();
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();

    let mut fresh = |lhs: &str, used: &mut BTreeSet<String>| -> String {
        let counter = counters.entry(lhs.to_string()).or_insert(0);
        loop {
            *counter += 1;
            let candidate = format!("{lhs}__{counter}");
            if used.insert(candidate.clone()) {
                return candidate;
            }
        }
    };

    for (idx, p) in g.productions.iter().enumerate() {
        if p.rhs.len() <= 2 {
            origin.insert(productions.len(), idx);
            productions.push(p.clone());
        } else {
            let mut lhs = p.lhs.clone();
            for i in 0..p.rhs.len() - 2 {
                let next = fresh(&p.lhs, &mut used);
                aux.insert(next.clone());
                origin.insert(productions.len(), idx);
                productions.push(Production::new(lhs, vec![p.rhs[i].clone(), next.clone()]));
                lhs = next;
            }
            origin.insert(productions.len(), idx);
            productions.push(Production::new(
                lhs,
                vec![p.rhs[p.rhs.len() - 2].clone(), p.rhs[p.rhs.len() - 1].clone()],
            ));
        }
    }

    let mut features = g.features.clone();
    for a in &aux {
        features.insert(a.clone(), BTreeSet::from(["aux".to_string()]));
    }
    let mut nonterminals = g.nonterminals.clone();
    nonterminals.extend(aux.iter().cloned());

    BinarizedCfg {
        base: Cfg {
            nonterminals,
            terminals: g.terminals.clone(),
            productions,
            axiom: g.axiom.clone(),
            features,
        },
        aux,
        origin,
    }
}

impl BinarizedCfg {
    /// Rewrites a formula meant for original parse trees into one over
    /// binarized parse trees: child steps may descend through a spine of
    /// auxiliary nodes, sibling steps may hop into an auxiliary node's
    /// first child, and the upward/leftward steps are their inverses.
    /// Identity when nothing was split.
    pub fn transport(&self, f: &NodeFormula) -> NodeFormula {
        if self.aux.is_empty() {
            return f.clone();
        }
        transport_node(f)
    }
}

fn aux_test() -> PathFormula {
    PathFormula::test(NodeFormula::atom("aux"))
}

fn not_aux_test() -> PathFormula {
    PathFormula::test(NodeFormula::atom("aux").not())
}

fn first_test() -> PathFormula {
    PathFormula::test(NodeFormula::diamond(PathFormula::left(), NodeFormula::tt()).not())
}

fn transport_node(f: &NodeFormula) -> NodeFormula {
    use crate::pdl::NodeF;
    match f.as_ref() {
        NodeF::True | NodeF::False | NodeF::Atom(_) => f.clone(),
        NodeF::Not(a) => transport_node(a).not(),
        NodeF::And(a, b) => NodeFormula::and(transport_node(a), transport_node(b)),
        NodeF::Or(a, b) => NodeFormula::or(transport_node(a), transport_node(b)),
        NodeF::Implies(a, b) => NodeFormula::implies(transport_node(a), transport_node(b)),
        NodeF::Iff(a, b) => NodeFormula::iff(transport_node(a), transport_node(b)),
        NodeF::Diamond(p, a) => NodeFormula::diamond(transport_path(p), transport_node(a)),
        NodeF::Box(p, a) => NodeFormula::boxed(transport_path(p), transport_node(a)),
    }
}

fn transport_path(p: &PathFormula) -> PathFormula {
    use crate::pdl::PathF;
    match p.as_ref() {
        PathF::Step(Axis::Down) => {
            // ↓ ; (aux? ; ↓)* ; ¬aux?
            PathFormula::step(Axis::Down)
                .seq(PathFormula::seq(aux_test(), PathFormula::step(Axis::Down)).star())
                .seq(not_aux_test())
        }
        PathF::Step(Axis::Right) => {
            // (→ ; ¬aux?) + (→ ; aux? ; ↓ ; first?)
            PathFormula::alt(
                PathFormula::step(Axis::Right).seq(not_aux_test()),
                PathFormula::step(Axis::Right)
                    .seq(aux_test())
                    .seq(PathFormula::step(Axis::Down))
                    .seq(first_test()),
            )
        }
        PathF::Seq(a, b) => PathFormula::seq(transport_path(a), transport_path(b)),
        PathF::Alt(a, b) => PathFormula::alt(transport_path(a), transport_path(b)),
        PathF::Star(a) => transport_path(a).star(),
        // up and left are inverses of down and right, so recursing through
        // the inverse transports them for free
        PathF::Inverse(a) => transport_path(a).inverse(),
        PathF::Test(f) => PathFormula::test(transport_node(f)),
    }
}

/// The grammar-correctness formula: a tree satisfies it iff the tree is a
/// parse tree of `g` (axiom at the root, every leaf a terminal or `eps`,
/// every nonterminal node's child sequence matching one of its
/// productions).
///
/// Symbols are identified by their name used as an atom, which matches the
/// default feature sets; grammars with redeclared feature sets should be
/// checked under default features.
pub fn grammar_to_pdl(g: &Cfg) -> NodeFormula {
    let leaf = NodeFormula::diamond(PathFormula::step(Axis::Down), NodeFormula::tt()).not();
    let last = NodeFormula::diamond(PathFormula::step(Axis::Right), NodeFormula::tt()).not();
    let first = NodeFormula::diamond(PathFormula::left(), NodeFormula::tt()).not();
    let first_child = PathFormula::step(Axis::Down).seq(PathFormula::test(first));

    // leaf ≡ ⋁_{a ∈ Σ ∪ {eps}} a
    let mut leaf_labels: Vec<NodeFormula> =
        g.terminals.iter().map(NodeFormula::atom).collect();
    leaf_labels.push(NodeFormula::atom("eps"));
    let leaves_ok = NodeFormula::iff(leaf, or_all(leaf_labels));

    // ⋀_{A ∈ N} A ⇒ ⋁_{A→α} <↙ ; π_α>⊤
    let mut prod_clauses = Vec::new();
    for a in &g.nonterminals {
        let alternatives: Vec<NodeFormula> = g
            .productions_of(a)
            .map(|p| {
                NodeFormula::diamond(
                    first_child.clone().seq(rhs_path(&p.rhs, &last)),
                    NodeFormula::tt(),
                )
            })
            .collect();
        prod_clauses.push(NodeFormula::implies(NodeFormula::atom(a), or_all(alternatives)));
    }

    NodeFormula::and(
        NodeFormula::atom(&g.axiom),
        NodeFormula::boxed(
            PathFormula::step(Axis::Down).star(),
            NodeFormula::and(leaves_ok, and_all(prod_clauses)),
        ),
    )
}

/// π_α: walks the child sequence checking each symbol, ending on the last
/// child; the empty right-hand side expects a single `eps` leaf.
fn rhs_path(rhs: &[String], last: &NodeFormula) -> PathFormula {
    let last_test = PathFormula::test(last.clone());
    match rhs {
        [] => PathFormula::test(NodeFormula::atom("eps")).seq(last_test),
        [x] => PathFormula::test(NodeFormula::atom(x)).seq(last_test),
        [x, rest @ ..] => PathFormula::test(NodeFormula::atom(x))
            .seq(PathFormula::step(Axis::Right))
            .seq(rhs_path(rest, last)),
    }
}

/// Comb-shaped grammar over a single letter used across the test suites:
/// each input position independently chooses an F or a T child.
#[cfg(test)]
pub(crate) const APP_B_3SAT: &str = "axiom S ;\n\
     S -> S F | S T | F | T ;\n\
     F -> \"a\" ;\n\
     T -> \"a\" ;\n";

#[cfg(test)]
mod tests {
    use super::*;

    const CLITICS: &str = include_str!("../../../fixtures/clitics.cfg");
    const DANGLING_ELSE: &str = include_str!("../../../fixtures/dangling_else.cfg");

    #[test]
    fn minimal_epsilon_grammar() {
        let g = parse_grammar_text("axiom S ; S -> ;").unwrap();
        assert_eq!(g.productions, vec![Production::new("S", vec![])]);
        assert_eq!(g.axiom, "S");
        assert!(!check_epsilon_free(&g));
        assert!(check_acyclic(&g));
    }

    #[test]
    fn undeclared_symbol_is_an_error() {
        let e = parse_grammar_text("axiom S ; S -> Foo ;").unwrap_err();
        assert!(e.msg.contains("Foo"), "{e}");
    }

    #[test]
    fn duplicate_axiom_is_an_error() {
        let e = parse_grammar_text("axiom S ; axiom T ; S -> ;").unwrap_err();
        assert!(e.msg.contains("duplicate axiom"), "{e}");
    }

    #[test]
    fn reserved_names_rejected() {
        assert!(parse_grammar_text("axiom eps ; eps -> ;").is_err());
        assert!(parse_grammar_text("axiom S ; S -> \"top\" ;").is_err());
        assert!(parse_grammar_text("axiom S ; features S = aux ; S -> ;").is_err());
    }

    #[test]
    fn optional_sugar_expands() {
        let g = parse_grammar_text(CLITICS).unwrap();
        assert_eq!(g.productions_of("S").count(), 8);
        assert_eq!(g.productions_of("VN").count(), 8);
        // all-present alternative comes first
        assert_eq!(
            g.productions_of("S").next().unwrap().rhs,
            vec!["NPsuj", "VN", "VPinfobj", "PPaobj"]
        );
        assert_eq!(
            g.features_of("NPsuj"),
            BTreeSet::from(["NP".to_string(), "suj".to_string()])
        );
        assert_eq!(g.features_of("v"), BTreeSet::from(["v".to_string()]));
        assert!(check_epsilon_free(&g));
        assert!(check_acyclic(&g));
        g.validate().unwrap();
    }

    #[test]
    fn optional_duplicates_are_merged() {
        let g = parse_grammar_text("axiom S ; S -> A? A? ; A -> \"a\" ;").unwrap();
        let rhss: Vec<_> = g.productions_of("S").map(|p| p.rhs.clone()).collect();
        assert_eq!(
            rhss,
            vec![vec!["A".to_string(), "A".to_string()], vec!["A".to_string()], vec![]]
        );
    }

    #[test]
    fn print_parse_round_trip() {
        for text in [CLITICS, DANGLING_ELSE, super::APP_B_3SAT, "axiom S ; S -> | S \"a\" ;"] {
            let g = parse_grammar_text(text).unwrap();
            let reparsed = parse_grammar_text(&print_grammar(&g)).unwrap();
            assert_eq!(g, reparsed);
        }
    }

    #[test]
    fn acyclicity_examples() {
        // F and T are not nullable, so S -> S F adds no S -> S edge.
        assert!(check_acyclic(&parse_grammar_text(super::APP_B_3SAT).unwrap()));
        // unit self-loop
        let g = parse_grammar_text("axiom S ; S -> H ; H -> H | \"a\" ;").unwrap();
        assert!(!check_acyclic(&g));
        assert!(check_acyclic(&parse_grammar_text("axiom S ; S -> \"a\" ;").unwrap()));
        // cycle only through nullable context
        let g = parse_grammar_text(
            "axiom S ; S -> A T ; A -> ; T -> S | \"x\" ;",
        )
        .unwrap();
        assert!(!check_acyclic(&g));
        // same shape, but the context is not nullable
        let g = parse_grammar_text(
            "axiom S ; S -> A T ; A -> \"a\" ; T -> S | \"x\" ;",
        )
        .unwrap();
        assert!(check_acyclic(&g));
    }

    #[test]
    fn epsilon_freeness_examples() {
        assert!(check_epsilon_free(&parse_grammar_text(DANGLING_ELSE).unwrap()));
        assert!(!check_epsilon_free(
            &parse_grammar_text("axiom S ; S -> M \"a\" ; M -> ;").unwrap()
        ));
    }

    #[test]
    fn binarize_splits_long_productions() {
        let g = parse_grammar_text(
            "axiom A ; A -> X Y Z ; X -> \"x\" ; Y -> \"y\" ; Z -> \"z\" ;",
        )
        .unwrap();
        let b = binarize(&g);
        assert_eq!(b.aux, BTreeSet::from(["A__1".to_string()]));
        assert_eq!(b.base.productions[0], Production::new("A", vec!["X".into(), "A__1".into()]));
        assert_eq!(b.base.productions[1], Production::new("A__1", vec!["Y".into(), "Z".into()]));
        assert_eq!(b.origin[&0], 0);
        assert_eq!(b.origin[&1], 0);
        assert_eq!(b.base.features_of("A__1"), BTreeSet::from(["aux".to_string()]));
        assert!(b.base.productions.iter().all(|p| p.rhs.len() <= 2));
        b.base.validate().unwrap();
    }

    #[test]
    fn binarize_is_identity_on_short_grammars() {
        let g = parse_grammar_text(super::APP_B_3SAT).unwrap();
        let b = binarize(&g);
        assert!(b.aux.is_empty());
        assert_eq!(b.base, g);
        let phi = NodeFormula::diamond(PathFormula::step(Axis::Down), NodeFormula::tt());
        assert_eq!(b.transport(&phi), phi);
    }

    #[test]
    fn dangling_else_nine_token_sentence_parses() {
        let g = parse_grammar_text(DANGLING_ELSE).unwrap();
        assert_eq!(g.productions_of("S").count(), 4);
        assert!(g.terminals.contains("else"));
        g.validate().unwrap();
    }
}
