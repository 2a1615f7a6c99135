//! Shared test oracles, independent of the library's computation paths:
//! path enumeration drives everything here, plus a min-flow solver for
//! the true minimum arc-covering path count.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use lattice_rescore::lattice::{ArcId, StateId};
use lattice_rescore::score::Scorer;
use lattice_rescore::{Lattice, LatticeBuilder, Path};

pub const ENUM_LIMIT: usize = 200_000;

pub fn fcmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("finite")
}

/// (raw word sequence, cost) multiset, sorted for comparison.
pub fn path_multiset(lat: &Lattice) -> Vec<(Vec<String>, f64)> {
    let mut out: Vec<(Vec<String>, f64)> = lat
        .enumerate_paths(ENUM_LIMIT)
        .expect("enumerable")
        .iter()
        .map(|p| {
            (
                p.words(lat)
                    .iter()
                    .map(|&w| lat.word_name(w).to_string())
                    .collect(),
                p.cost,
            )
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0).then(fcmp(a.1, b.1)));
    out
}

pub fn assert_same_language(a: &Lattice, b: &Lattice, tol: f64) {
    let pa = path_multiset(a);
    let pb = path_multiset(b);
    assert_eq!(pa.len(), pb.len(), "path counts differ");
    for ((wa, ca), (wb, cb)) in pa.iter().zip(pb.iter()) {
        assert_eq!(wa, wb, "word sequences differ");
        assert!((ca - cb).abs() <= tol, "costs differ: {ca} vs {cb}");
    }
}

/// Exhaustive rescoring oracle: enumerate every path, score each
/// hypothesis exactly, and pick the best combination.
/// Returns (hypothesis words, combined cost).
pub fn exhaustive_best<S: Scorer>(lat: &Lattice, scorer: &S, lambda: f64) -> (Vec<String>, f64) {
    let paths = lat.enumerate_paths(ENUM_LIMIT).expect("enumerable");
    let requests: Vec<lattice_rescore::score::ScoreRequest> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| lattice_rescore::score::ScoreRequest {
            id: i as u64,
            tokens: p.hypothesis_words(lat),
        })
        .collect();
    let batch = lattice_rescore::score::score_hypotheses(scorer, requests).expect("scorable");
    let total = |i: usize| {
        let nn: f64 = batch.responses[i].costs.iter().sum();
        let p = &paths[i];
        lambda * nn + (1.0 - lambda) * p.graph_cost(lat) + p.acoustic_cost(lat)
    };
    let mut best = 0usize;
    for i in 1..paths.len() {
        match fcmp(total(i), total(best)) {
            Ordering::Less => best = i,
            Ordering::Equal => {
                if lat.cmp_word_seqs(&paths[i].words(lat), &paths[best].words(lat))
                    == Ordering::Less
                {
                    best = i;
                }
            }
            Ordering::Greater => {}
        }
    }
    (paths[best].hypothesis_words(lat), total(best))
}

/// Smallest path posterior of the lattice; thresholds strictly below it
/// force full expansion.
pub fn min_path_posterior(lat: &Lattice) -> f64 {
    let total = lattice_rescore::viterbi::total_log_prob(lat);
    lat.enumerate_paths(ENUM_LIMIT)
        .expect("enumerable")
        .iter()
        .map(|p| (-p.cost - total).exp())
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------
// Min-flow oracle: the true minimum number of complete paths that cover
// every arc equals the minimum s-t flow with a lower bound of 1 per arc.
// ---------------------------------------------------------------------

struct Dinic {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
}

impl Dinic {
    fn new(n: usize) -> Self {
        Dinic {
            adj: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: i64) -> usize {
        let id = self.to.len();
        self.adj[u].push(id);
        self.to.push(v);
        self.cap.push(c);
        self.adj[v].push(id + 1);
        self.to.push(u);
        self.cap.push(0);
        id
    }

    fn flow_on(&self, edge: usize) -> i64 {
        self.cap[edge ^ 1]
    }

    fn disable(&mut self, edge: usize) {
        self.cap[edge] = 0;
        self.cap[edge ^ 1] = 0;
    }

    fn bfs(&self, s: usize, t: usize, level: &mut [i32]) -> bool {
        level.fill(-1);
        level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.cap[e] > 0 && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: i64, level: &[i32], iter: &mut [usize]) -> i64 {
        if u == t {
            return pushed;
        }
        while iter[u] < self.adj[u].len() {
            let e = self.adj[u][iter[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && level[v] == level[u] + 1 {
                let d = self.dfs(v, t, pushed.min(self.cap[e]), level, iter);
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            iter[u] += 1;
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let n = self.adj.len();
        let mut flow = 0;
        let mut level = vec![-1i32; n];
        while self.bfs(s, t, &mut level) {
            let mut iter = vec![0usize; n];
            loop {
                let pushed = self.dfs(s, t, i64::MAX, &level, &mut iter);
                if pushed == 0 {
                    break;
                }
                flow += pushed;
            }
        }
        flow
    }
}

/// Exact minimum number of complete start-to-final paths covering every
/// arc, via min flow with per-arc lower bound 1 (feasible flow from the
/// excess transform, then max backward flow to shrink it).
pub fn true_min_cover(lat: &Lattice) -> usize {
    let n = lat.num_states();
    if lat.num_arcs() == 0 {
        return 0;
    }
    const INF: i64 = 1 << 40;
    let sink = n;
    let ss = n + 1;
    let tt = n + 2;
    let mut net = Dinic::new(n + 3);
    let mut excess = vec![0i64; n + 1];
    for id in lat.arc_ids() {
        let (src, arc) = lat.arc(id);
        net.add_edge(src.idx(), arc.next_state.idx(), INF - 1);
        excess[arc.next_state.idx()] += 1;
        excess[src.idx()] -= 1;
    }
    for (f, _) in lat.finals() {
        net.add_edge(f.idx(), sink, INF);
    }
    let circulation = net.add_edge(sink, 0, INF);
    let mut need = 0;
    for (v, &ex) in excess.iter().enumerate() {
        match ex.cmp(&0) {
            Ordering::Greater => {
                net.add_edge(ss, v, ex);
                need += ex;
            }
            Ordering::Less => {
                net.add_edge(v, tt, -ex);
            }
            Ordering::Equal => {}
        }
    }
    let got = net.max_flow(ss, tt);
    assert_eq!(got, need, "every arc of a trimmed lattice lies on a path");
    let feasible = net.flow_on(circulation);
    net.disable(circulation);
    let reduction = net.max_flow(sink, 0);
    (feasible - reduction) as usize
}

// ---------------------------------------------------------------------
// Random general DAGs (not spindle-shaped): frankenstein merges and
// re-branches included, for invariants that must hold universally.
// ---------------------------------------------------------------------

/// Deterministically build a small random DAG lattice from a seed.
/// Costs sit on the 1/64 grid. Returns None when the draw collapses
/// (no complete path).
pub fn random_dag(seed: u64, max_states: usize) -> Option<Lattice> {
    let mut rng = lattice_rescore::pipeline::SplitMix64::new(seed);
    let n = 2 + rng.below(max_states.saturating_sub(1).max(1));
    let vocab = ["va", "vb", "vc", "vd", "ve", "vf"];
    let mut b = LatticeBuilder::new();
    let words: Vec<_> = vocab.iter().map(|w| b.intern(w)).collect();
    for _ in 0..n {
        b.add_state();
    }
    let arc_count = 1 + rng.below(2 * n);
    let mut used: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    for _ in 0..arc_count {
        let src = rng.below(n - 1);
        let dst = src + 1 + rng.below(n - src - 1);
        let w = rng.below(vocab.len());
        if used.insert((src, w), ()).is_some() {
            continue; // keep the acceptor deterministic
        }
        let g = rng.below(128) as f64 / 64.0;
        let a = rng.below(64) as f64 / 64.0;
        let frames = 1 + rng.below(3) as u32;
        b.add_arc(StateId(src as u32), words[w], g, a, frames, StateId(dst as u32));
    }
    b.set_final(StateId(n as u32 - 1), rng.below(32) as f64 / 64.0);
    // Sprinkle extra finals.
    for s in 1..n - 1 {
        if rng.chance(0.15) {
            b.set_final(StateId(s as u32), rng.below(32) as f64 / 64.0);
        }
    }
    b.finish().ok().map(|t| t.lattice)
}

/// Per-arc minimum complete-path cost by enumeration.
pub fn through_costs(lat: &Lattice) -> Vec<f64> {
    let mut through = vec![f64::INFINITY; lat.num_arcs()];
    for p in lat.enumerate_paths(ENUM_LIMIT).expect("enumerable") {
        for &id in &p.arcs {
            if p.cost < through[id.idx()] {
                through[id.idx()] = p.cost;
            }
        }
    }
    through
}

/// Per-final-state minimum cost over paths stopping there.
pub fn stop_costs(lat: &Lattice) -> BTreeMap<StateId, f64> {
    let mut stops: BTreeMap<StateId, f64> = BTreeMap::new();
    for p in lat.enumerate_paths(ENUM_LIMIT).expect("enumerable") {
        let end = p.end_state(lat);
        let entry = stops.entry(end).or_insert(f64::INFINITY);
        if p.cost < *entry {
            *entry = p.cost;
        }
    }
    stops
}

/// Best path through an arc by enumeration, with the global tie-break.
pub fn best_through_by_enumeration(lat: &Lattice, arc: ArcId) -> Path {
    let mut best: Option<Path> = None;
    for p in lat.enumerate_paths(ENUM_LIMIT).expect("enumerable") {
        if !p.arcs.contains(&arc) {
            continue;
        }
        best = match best {
            None => Some(p),
            Some(cur) => {
                if lat.cmp_paths(&p, &cur) == Ordering::Less {
                    Some(p)
                } else {
                    Some(cur)
                }
            }
        };
    }
    best.expect("every arc of a trimmed lattice lies on a path")
}
