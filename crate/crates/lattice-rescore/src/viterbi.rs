//! Forward-backward computations over a lattice.
//!
//! All arithmetic here is in log-probability space: an arc with cost `c`
//! nats contributes log-probability `-c`, and a final state with final
//! cost `f` contributes `-f`. This keeps the posterior formula
//! `exp(alpha + logp + beta - beta[start])` dimensionally consistent;
//! costs are negated exactly once, at this module's boundary.
//!
//! In the max semiring the tables record best predecessor/successor
//! links so that the best path through any state or arc can be read off
//! directly. Ties are broken by the lexicographic word sequence of the
//! competing prefix or suffix, which in a deterministic lattice is
//! always decisive.

use std::cmp::Ordering;

use crate::lattice::{fcmp, ArcId, Lattice, Path, StateId};

/// Accumulation rule for forward/backward scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semiring {
    /// Viterbi: best (maximum) log-probability.
    Max,
    /// Log: log-sum-exp over all paths.
    Sum,
}

impl std::str::FromStr for Semiring {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "max" => Ok(Semiring::Max),
            "sum" => Ok(Semiring::Sum),
            other => Err(crate::Error::Config(format!(
                "unknown posterior semiring {other:?} (expected sum or max)"
            ))),
        }
    }
}

/// How the best suffix from a state continues (max semiring only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuccLink {
    /// Stop here: the state is final and stopping is the best suffix.
    Stop,
    /// Take this arc.
    Arc(ArcId),
}

/// Forward/backward scores, plus best-path links in max mode.
///
/// `alpha[s]` is the score of paths from the start to `s`; `beta[s]` the
/// score of suffixes from `s` to a final stop (final cost included). In
/// sum mode `beta[start]` is the total log-probability of the lattice.
#[derive(Debug)]
pub struct ForwardBackward {
    pub semiring: Semiring,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Arc achieving `alpha[s]`, per state (None at the start).
    pub best_pred: Vec<Option<ArcId>>,
    /// Continuation achieving `beta[s]`, per state.
    pub best_succ: Vec<Option<SuccLink>>,
}

/// Numerically stable log(exp(a) + exp(b)).
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Run forward and backward passes over a canonical (topologically
/// ordered) lattice.
pub fn forward_backward(lat: &Lattice, semiring: Semiring) -> ForwardBackward {
    let n = lat.num_states();
    let mut alpha = vec![f64::NEG_INFINITY; n];
    let mut beta = vec![f64::NEG_INFINITY; n];
    let mut best_pred: Vec<Option<ArcId>> = vec![None; n];
    let mut best_succ: Vec<Option<SuccLink>> = vec![None; n];

    alpha[0] = 0.0;
    for s in lat.states() {
        let base = alpha[s.idx()];
        if base == f64::NEG_INFINITY {
            continue;
        }
        for (id, arc) in lat.out_with_ids(s) {
            let cand = base + arc.log_prob();
            let t = arc.next_state.idx();
            match semiring {
                Semiring::Sum => alpha[t] = log_add(alpha[t], cand),
                Semiring::Max => {
                    let better = match fcmp(cand, alpha[t]) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => {
                            prefix_wins(lat, &best_pred, id, best_pred[t].expect("tie implies a link"))
                        }
                    };
                    if better {
                        alpha[t] = cand;
                        best_pred[t] = Some(id);
                    }
                }
            }
        }
    }

    for s in (0..n as u32).rev().map(StateId) {
        let mut score = f64::NEG_INFINITY;
        let mut link: Option<SuccLink> = None;
        if let Some(fc) = lat.final_cost(s) {
            score = -fc;
            link = Some(SuccLink::Stop);
        }
        for (id, arc) in lat.out_with_ids(s) {
            let cand = arc.log_prob() + beta[arc.next_state.idx()];
            match semiring {
                Semiring::Sum => score = log_add(score, cand),
                Semiring::Max => {
                    let better = match fcmp(cand, score) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        // An empty suffix (Stop) sorts before any word;
                        // two arcs differ in their first word.
                        Ordering::Equal => match link.expect("tie implies a link") {
                            SuccLink::Stop => false,
                            SuccLink::Arc(cur) => {
                                let wa = lat.word_name(lat.arc(id).1.word);
                                let wb = lat.word_name(lat.arc(cur).1.word);
                                wa < wb
                            }
                        },
                    };
                    if better {
                        score = cand;
                        link = Some(SuccLink::Arc(id));
                    }
                }
            }
        }
        beta[s.idx()] = score;
        best_succ[s.idx()] = link;
    }

    if semiring == Semiring::Sum {
        best_pred.clear();
        best_succ.clear();
    }
    ForwardBackward {
        semiring,
        alpha,
        beta,
        best_pred,
        best_succ,
    }
}

/// Lexicographic comparison of the two prefixes ending in `cand` and
/// `cur`, for alpha tie-breaking. Materializes both prefixes by
/// following the (already fixed) predecessor links.
fn prefix_wins(lat: &Lattice, best_pred: &[Option<ArcId>], cand: ArcId, cur: ArcId) -> bool {
    let words = |last: ArcId| {
        let mut seq = Vec::new();
        let mut arc = Some(last);
        while let Some(id) = arc {
            let (src, a) = lat.arc(id);
            seq.push(a.word);
            arc = best_pred[src.idx()];
        }
        seq.reverse();
        seq
    };
    match lat.cmp_word_seqs(&words(cand), &words(cur)) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => cand < cur,
    }
}

/// Best (minimum-cost) complete path, ties broken lexicographically.
pub fn best_path(lat: &Lattice) -> Path {
    let fb = forward_backward(lat, Semiring::Max);
    trace_suffix(lat, &fb, lat.start(), Vec::new())
}

/// The best complete path through one arc: the best prefix into its
/// source, the arc itself, then the best suffix from its destination.
pub fn best_path_through(lat: &Lattice, fb: &ForwardBackward, id: ArcId) -> Path {
    debug_assert_eq!(fb.semiring, Semiring::Max);
    let (src, arc) = lat.arc(id);
    let mut prefix = Vec::new();
    let mut state = src;
    while let Some(p) = fb.best_pred[state.idx()] {
        prefix.push(p);
        state = lat.arc(p).0;
    }
    prefix.reverse();
    prefix.push(id);
    trace_suffix(lat, fb, arc.next_state, prefix)
}

fn trace_suffix(lat: &Lattice, fb: &ForwardBackward, from: StateId, mut arcs: Vec<ArcId>) -> Path {
    let mut state = from;
    loop {
        match fb.best_succ[state.idx()].expect("trimmed lattice: every state reaches a final") {
            SuccLink::Stop => break,
            SuccLink::Arc(id) => {
                arcs.push(id);
                state = lat.arc(id).1.next_state;
            }
        }
    }
    let cost: f64 = arcs.iter().map(|&id| lat.arc(id).1.cost()).sum::<f64>()
        + lat.final_cost(state).expect("suffix trace ends at a final state");
    Path { arcs, cost }
}

/// Per-arc posteriors, indexed by ArcId:
/// `exp(alpha[src] + logp(arc) + beta[dst] - beta[start])`.
///
/// Sum mode gives the standard arc posterior (total probability mass of
/// paths through the arc); max mode the Viterbi variant. Values are
/// clamped to [0, 1]; the raw value never exceeds 1 by more than
/// floating-point slack.
pub fn arc_posteriors(lat: &Lattice, semiring: Semiring) -> Vec<f64> {
    let fb = forward_backward(lat, semiring);
    let total = fb.beta[0];
    lat.arc_ids()
        .map(|id| {
            let (src, arc) = lat.arc(id);
            let lp = fb.alpha[src.idx()] + arc.log_prob() + fb.beta[arc.next_state.idx()] - total;
            let p = lp.exp();
            debug_assert!(p <= 1.0 + 1e-9, "posterior {p} exceeds 1");
            p.clamp(0.0, 1.0)
        })
        .collect()
}

/// Total log-probability of the lattice (sum-mode beta at the start).
pub fn total_log_prob(lat: &Lattice) -> f64 {
    forward_backward(lat, Semiring::Sum).beta[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{parse_lattice, LatticeBuilder};

    fn diamond_probs(p1: f64, p2: f64) -> Lattice {
        // Two 2-arc paths with total probabilities p1 (a,c) and p2 (b,d).
        let mut b = LatticeBuilder::new();
        let (wa, wb, wc, wd) = (b.intern("a"), b.intern("b"), b.intern("c"), b.intern("d"));
        for _ in 0..4 {
            b.add_state();
        }
        b.add_arc(StateId(0), wa, -p1.ln(), 0.0, 1, StateId(1));
        b.add_arc(StateId(0), wb, -p2.ln(), 0.0, 1, StateId(2));
        b.add_arc(StateId(1), wc, 0.0, 0.0, 1, StateId(3));
        b.add_arc(StateId(2), wd, 0.0, 0.0, 1, StateId(3));
        b.set_final(StateId(3), 0.0);
        b.finish().unwrap().lattice
    }

    #[test]
    fn linear_sum_beta_is_negative_total_cost() {
        let lat = parse_lattice("0 1 a 0.5,0.25\n1 2 b 0.125,0.5\n2 0.25\n").unwrap();
        let fb = forward_backward(&lat, Semiring::Sum);
        assert!((fb.beta[0] - (-1.625)).abs() < 1e-12);
    }

    #[test]
    fn diamond_sum_beta_is_log_sum_of_path_probs() {
        let lat = diamond_probs(0.5, 0.5);
        let fb = forward_backward(&lat, Semiring::Sum);
        // log(0.5 + 0.5) = 0.
        assert!(fb.beta[0].abs() < 1e-12);
        let lat = diamond_probs(0.5, 0.25);
        let fb = forward_backward(&lat, Semiring::Sum);
        assert!((fb.beta[0] - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn max_backtrace_matches_enumeration() {
        let lat = diamond_probs(0.25, 0.5);
        let best = best_path(&lat);
        let oracle = &lat.enumerate_paths(10).unwrap()[0];
        assert_eq!(best.arcs, oracle.arcs);
        assert!((best.cost - oracle.cost).abs() < 1e-12);
    }

    #[test]
    fn single_path_posteriors_are_one() {
        let lat = parse_lattice("0 1 a 0.5,0.25\n1 2 b 0.125,0.5\n2 0.25\n").unwrap();
        for semiring in [Semiring::Sum, Semiring::Max] {
            for p in arc_posteriors(&lat, semiring) {
                assert_eq!(p, 1.0);
            }
        }
    }

    #[test]
    fn diamond_branch_posteriors_match_path_probs() {
        let lat = diamond_probs(0.75, 0.25);
        let post = arc_posteriors(&lat, Semiring::Sum);
        // Arcs sorted by word: a (0.75 branch), b (0.25 branch), then c, d.
        assert!((post[0] - 0.75).abs() < 1e-12);
        assert!((post[1] - 0.25).abs() < 1e-12);
        assert!((post[2] - 0.75).abs() < 1e-12);
        assert!((post[3] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cut_conservation_on_diamond() {
        let lat = diamond_probs(0.75, 0.25);
        let post = arc_posteriors(&lat, Semiring::Sum);
        // Cut between {0} and the rest, and between {0,1,2} and {3}.
        assert!((post[0] + post[1] - 1.0).abs() < 1e-6);
        assert!((post[2] + post[3] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn equal_cost_paths_break_ties_lexicographically() {
        let lat = diamond_probs(0.5, 0.5);
        let best = best_path(&lat);
        let words: Vec<&str> = best.words(&lat).iter().map(|&w| lat.word_name(w)).collect();
        assert_eq!(words, vec!["a", "c"]);
    }

    #[test]
    fn max_mode_best_path_posteriors_are_exactly_one() {
        let lat = diamond_probs(0.75, 0.25);
        let post = arc_posteriors(&lat, Semiring::Max);
        let best = best_path(&lat);
        for id in best.arcs {
            assert_eq!(post[id.idx()], 1.0);
        }
    }
}
