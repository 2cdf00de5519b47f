//! Acceptance games. A run of the automaton on a fixed stream is a
//! min-parity game between Eloise (resolving disjunctions) and Abelard
//! (resolving conjunctions); the automaton accepts exactly when Eloise wins.

use std::collections::HashMap;

use super::{Apwa, StreamWord, Tf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Owner {
    Eloise,
    Abelard,
}

impl Owner {
    fn other(self) -> Owner {
        match self {
            Owner::Eloise => Owner::Abelard,
            Owner::Abelard => Owner::Eloise,
        }
    }
}

/// Finite min-parity game: the minimal priority occurring infinitely often
/// decides an infinite play (even favors Eloise). Every vertex must have at
/// least one successor; terminal results are modeled as self-loop sinks.
pub(crate) struct ParityGame {
    pub owner: Vec<Owner>,
    pub priority: Vec<u32>,
    pub succ: Vec<Vec<usize>>,
}

impl ParityGame {
    fn preds(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.succ.len()];
        for (v, outs) in self.succ.iter().enumerate() {
            for &u in outs {
                preds[u].push(v);
            }
        }
        preds
    }

    /// Attractor of `seed` for `player` within `alive`.
    fn attract(
        &self,
        alive: &[bool],
        preds: &[Vec<usize>],
        player: Owner,
        seed: &[usize],
    ) -> Vec<bool> {
        let n = self.succ.len();
        let mut inset = vec![false; n];
        let mut escape = vec![0usize; n];
        for v in 0..n {
            if alive[v] && self.owner[v] != player {
                escape[v] = self.succ[v].iter().filter(|&&u| alive[u]).count();
            }
        }
        let mut queue: Vec<usize> = Vec::new();
        for &v in seed {
            if alive[v] && !inset[v] {
                inset[v] = true;
                queue.push(v);
            }
        }
        while let Some(v) = queue.pop() {
            for &u in &preds[v] {
                if !alive[u] || inset[u] {
                    continue;
                }
                let pulled = if self.owner[u] == player {
                    true
                } else {
                    escape[u] -= 1;
                    escape[u] == 0
                };
                if pulled {
                    inset[u] = true;
                    queue.push(u);
                }
            }
        }
        inset
    }

    /// Zielonka's algorithm; returns the winner of every vertex.
    pub fn winners(&self) -> Vec<Owner> {
        let n = self.succ.len();
        let preds = self.preds();
        let mut out = vec![Owner::Abelard; n];
        let alive = vec![true; n];
        self.zielonka(&alive, &preds, &mut out);
        out
    }

    fn zielonka(&self, alive: &[bool], preds: &[Vec<usize>], out: &mut [Owner]) {
        let Some(d) = (0..self.succ.len())
            .filter(|&v| alive[v])
            .map(|v| self.priority[v])
            .min()
        else {
            return;
        };
        let sigma = if d % 2 == 0 { Owner::Eloise } else { Owner::Abelard };
        let targets: Vec<usize> = (0..self.succ.len())
            .filter(|&v| alive[v] && self.priority[v] == d)
            .collect();
        let a_set = self.attract(alive, preds, sigma, &targets);
        let mut sub: Vec<bool> = alive.to_vec();
        for v in 0..sub.len() {
            if a_set[v] {
                sub[v] = false;
            }
        }
        self.zielonka(&sub, preds, out);
        let opp = sigma.other();
        let opp_won: Vec<usize> =
            (0..self.succ.len()).filter(|&v| sub[v] && out[v] == opp).collect();
        if opp_won.is_empty() {
            for v in 0..self.succ.len() {
                if alive[v] {
                    out[v] = sigma;
                }
            }
            return;
        }
        let b_set = self.attract(alive, preds, opp, &opp_won);
        let mut rest: Vec<bool> = alive.to_vec();
        for v in 0..rest.len() {
            if b_set[v] {
                rest[v] = false;
                out[v] = opp;
            }
        }
        self.zielonka(&rest, preds, out);
    }
}

/// Incremental game arena shared by the acceptance and emptiness builders.
pub(crate) struct GameBuilder {
    pub owner: Vec<Owner>,
    pub priority: Vec<u32>,
    pub succ: Vec<Vec<usize>>,
    pub eloise_sink: usize,
    pub abelard_sink: usize,
}

impl GameBuilder {
    /// `neutral` must be an even priority strictly above every automaton
    /// priority so that bookkeeping vertices never decide a cycle.
    pub fn new(neutral: u32) -> GameBuilder {
        let mut b = GameBuilder {
            owner: Vec::new(),
            priority: Vec::new(),
            succ: Vec::new(),
            eloise_sink: 0,
            abelard_sink: 0,
        };
        b.eloise_sink = b.vertex(Owner::Abelard, neutral);
        b.succ[b.eloise_sink].push(b.eloise_sink);
        b.abelard_sink = b.vertex(Owner::Eloise, neutral + 1);
        b.succ[b.abelard_sink].push(b.abelard_sink);
        b
    }

    pub fn vertex(&mut self, owner: Owner, priority: u32) -> usize {
        self.owner.push(owner);
        self.priority.push(priority);
        self.succ.push(Vec::new());
        self.owner.len() - 1
    }

    pub fn edge(&mut self, from: usize, to: usize) {
        self.succ[from].push(to);
    }

    pub fn finish(self) -> ParityGame {
        ParityGame { owner: self.owner, priority: self.priority, succ: self.succ }
    }
}

pub(crate) fn neutral_priority(a: &Apwa) -> u32 {
    let m = a.priority.iter().copied().max().unwrap_or(0) + 1;
    m + m % 2
}

/// Does the automaton accept the stream when started in its initial state
/// on position `pos`?
pub fn accepts_from(a: &Apwa, w: &StreamWord, pos: usize) -> bool {
    if pos >= w.0.len() {
        return false;
    }
    let mut b = GameBuilder::new(neutral_priority(a));
    let neutral = b.priority[b.eloise_sink];
    // state vertices by (position, state), formula vertices by
    // (position, live table entry); tables are not mutated during the build
    let mut state_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut formula_ids: HashMap<(usize, *const Tf), usize> = HashMap::new();
    let mut todo: Vec<(usize, usize)> = Vec::new();

    let root = get_state(&mut b, &mut state_ids, &mut todo, (pos, a.initial), a);
    while let Some((p, q)) = todo.pop() {
        let v = state_ids[&(p, q)];
        match a.delta[q].get(&w.0[p]) {
            None => {
                let sink = b.abelard_sink;
                b.edge(v, sink);
            }
            Some(tf) => {
                let f = formula_vertex(
                    &mut b,
                    &mut state_ids,
                    &mut formula_ids,
                    &mut todo,
                    p,
                    tf,
                    a,
                    w.0.len(),
                    neutral,
                );
                b.edge(v, f);
            }
        }
    }
    let game = b.finish();
    game.winners()[root] == Owner::Eloise
}

fn get_state(
    b: &mut GameBuilder,
    state_ids: &mut HashMap<(usize, usize), usize>,
    todo: &mut Vec<(usize, usize)>,
    key: (usize, usize),
    a: &Apwa,
) -> usize {
    if let Some(&v) = state_ids.get(&key) {
        return v;
    }
    let v = b.vertex(Owner::Eloise, a.priority[key.1]);
    state_ids.insert(key, v);
    todo.push(key);
    v
}

#[allow(clippy::too_many_arguments)]
fn formula_vertex(
    b: &mut GameBuilder,
    state_ids: &mut HashMap<(usize, usize), usize>,
    formula_ids: &mut HashMap<(usize, *const Tf), usize>,
    todo: &mut Vec<(usize, usize)>,
    pos: usize,
    tf: &Tf,
    a: &Apwa,
    len: usize,
    neutral: u32,
) -> usize {
    let key = (pos, tf as *const Tf);
    if let Some(&v) = formula_ids.get(&key) {
        return v;
    }
    let v = match tf {
        Tf::Top => b.eloise_sink,
        Tf::Bot => b.abelard_sink,
        Tf::Atom(dir, q) => {
            let target = pos as isize + dir.offset();
            if target < 0 || target >= len as isize {
                b.abelard_sink
            } else {
                get_state(b, state_ids, todo, (target as usize, *q), a)
            }
        }
        Tf::And(x, y) | Tf::Or(x, y) => {
            let owner =
                if matches!(tf, Tf::And(..)) { Owner::Abelard } else { Owner::Eloise };
            let v = b.vertex(owner, neutral);
            formula_ids.insert(key, v);
            let xv = formula_vertex(b, state_ids, formula_ids, todo, pos, x, a, len, neutral);
            b.edge(v, xv);
            let yv = formula_vertex(b, state_ids, formula_ids, todo, pos, y, a, len, neutral);
            b.edge(v, yv);
            return v;
        }
    };
    formula_ids.insert(key, v);
    v
}

/// Does the automaton accept the stream from its start?
pub fn accepts(a: &Apwa, w: &StreamWord) -> bool {
    accepts_from(a, w, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sink_game() -> GameBuilder {
        GameBuilder::new(10)
    }

    #[test]
    fn zielonka_on_hand_built_games() {
        // Eloise vertex choosing between an odd self-loop and the even sink
        let mut b = sink_game();
        let v = b.vertex(Owner::Eloise, 1);
        b.edge(v, v);
        let e = b.eloise_sink;
        b.edge(v, e);
        let g = b.finish();
        assert_eq!(g.winners()[v], Owner::Eloise);

        // Abelard vertex with the same options picks the odd loop
        let mut b = sink_game();
        let v = b.vertex(Owner::Abelard, 1);
        b.edge(v, v);
        let e = b.eloise_sink;
        b.edge(v, e);
        let g = b.finish();
        assert_eq!(g.winners()[v], Owner::Abelard);

        // a 2-cycle where the minimal priority is even
        let mut b = sink_game();
        let v = b.vertex(Owner::Abelard, 2);
        let u = b.vertex(Owner::Abelard, 3);
        b.edge(v, u);
        b.edge(u, v);
        let g = b.finish();
        assert_eq!(g.winners()[v], Owner::Eloise);
        assert_eq!(g.winners()[u], Owner::Eloise);
    }
}
