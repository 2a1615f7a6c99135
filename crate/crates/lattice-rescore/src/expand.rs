//! Lattice expansion.
//!
//! Rescoring with a context-dependent LM wants each arc to see a unique
//! word history; expansion duplicates states until that holds on the
//! paths that matter. Two methods:
//!
//! - [`expand_posterior`]: composition-style queue over (input state,
//!   output state) pairs. An arc whose running posterior exceeds the
//!   threshold gets a fresh private copy of its destination, so its
//!   history stays unique; everything else funnels into a single shared
//!   copy per input state. Smaller thresholds expand more.
//! - [`expand_ngram`]: the classical baseline that keys output states on
//!   (input state, last n-1 words), merging histories that agree on the
//!   most recent words.
//!
//! Both preserve the path language and weights exactly; only the amount
//! of state-splitting differs.

use std::collections::{HashMap, VecDeque};

use crate::lattice::{Lattice, LatticeBuilder, StateId, WordId};
use crate::viterbi::{forward_backward, log_add, Semiring};
use crate::{Error, Result};

/// Parameters for posterior-based expansion.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionConfig {
    /// Arc posterior threshold in (0, 1); arcs above it are expanded.
    pub epsilon: f64,
    /// Semiring for the backward scores and forward accumulation.
    pub posterior_semiring: Semiring,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            epsilon: 0.5,
            posterior_semiring: Semiring::Sum,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "expansion threshold must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Posterior-threshold expansion.
///
/// Backward scores are computed up front on the input; forward scores
/// grow with the output. For an arc out of output copy `s_out` of input
/// state `s_in`:
///
/// ```text
/// a_e  = alpha_out[s_out] + logp(arc)
/// post = exp(a_e + beta_in[dst] - beta_in[start])
/// ```
///
/// `post > epsilon` allocates a fresh copy of `dst` (in-degree 1 in the
/// output); otherwise the arc targets the one shared copy of `dst`,
/// created on first need. Fresh copies take `alpha = a_e`; the shared
/// copy accumulates (log-add in the sum semiring, max in max). The queue
/// of state pairs is FIFO, seeded with the start pair, and each pair is
/// processed exactly once, so a shared copy dequeued early can see
/// incoming mass arrive after its own arcs were scored; this shifts
/// which arcs expand, never the language.
pub fn expand_posterior(lat: &Lattice, cfg: &ExpansionConfig) -> Result<Lattice> {
    cfg.validate()?;
    let semiring = cfg.posterior_semiring;
    let beta = forward_backward(lat, semiring).beta;
    let total = beta[0];

    let mut builder = LatticeBuilder::with_symbols(lat.symbols().clone());
    let mut alpha_out: Vec<f64> = Vec::new();
    // Input state of each output state, for final-cost copying.
    let copy_final = |builder: &mut LatticeBuilder, s_in: StateId, s_out: StateId| {
        if let Some(fc) = lat.final_cost(s_in) {
            builder.set_final(s_out, fc);
        }
    };
    let mut shared: HashMap<StateId, StateId> = HashMap::new();
    let mut queue: VecDeque<(StateId, StateId)> = VecDeque::new();

    let start_out = builder.add_state();
    alpha_out.push(0.0);
    copy_final(&mut builder, lat.start(), start_out);
    queue.push_back((lat.start(), start_out));

    while let Some((s_in, s_out)) = queue.pop_front() {
        for arc in lat.out(s_in) {
            let a_e = alpha_out[s_out.idx()] + arc.log_prob();
            let post = (a_e + beta[arc.next_state.idx()] - total).exp();
            let dst_out = if post > cfg.epsilon {
                let fresh = builder.add_state();
                alpha_out.push(a_e);
                copy_final(&mut builder, arc.next_state, fresh);
                queue.push_back((arc.next_state, fresh));
                fresh
            } else if let Some(&existing) = shared.get(&arc.next_state) {
                let slot = &mut alpha_out[existing.idx()];
                *slot = match semiring {
                    Semiring::Sum => log_add(*slot, a_e),
                    Semiring::Max => slot.max(a_e),
                };
                existing
            } else {
                let copy = builder.add_state();
                alpha_out.push(a_e);
                copy_final(&mut builder, arc.next_state, copy);
                queue.push_back((arc.next_state, copy));
                shared.insert(arc.next_state, copy);
                copy
            };
            builder.add_arc(
                s_out,
                arc.word,
                arc.graph_cost,
                arc.acoustic_cost,
                arc.num_frames,
                dst_out,
            );
        }
    }
    builder.finish().map(|t| t.lattice)
}

/// N-gram approximation expansion: output states are the reachable
/// (input state, last n-1 words) pairs. For `order` larger than the
/// longest path every history is unique and the result is a prefix tree.
pub fn expand_ngram(lat: &Lattice, order: usize) -> Result<Lattice> {
    if order < 2 {
        return Err(Error::Config(format!(
            "n-gram expansion needs order >= 2, got {order}"
        )));
    }
    let window = order - 1;

    let mut builder = LatticeBuilder::with_symbols(lat.symbols().clone());
    let mut map: HashMap<(StateId, Vec<WordId>), StateId> = HashMap::new();
    let mut queue: VecDeque<(StateId, Vec<WordId>, StateId)> = VecDeque::new();

    let start_out = builder.add_state();
    if let Some(fc) = lat.final_cost(lat.start()) {
        builder.set_final(start_out, fc);
    }
    map.insert((lat.start(), Vec::new()), start_out);
    queue.push_back((lat.start(), Vec::new(), start_out));

    while let Some((s_in, hist, s_out)) = queue.pop_front() {
        for arc in lat.out(s_in) {
            let mut next_hist = hist.clone();
            next_hist.push(arc.word);
            if next_hist.len() > window {
                next_hist.remove(0);
            }
            let key = (arc.next_state, next_hist);
            let dst_out = match map.get(&key) {
                Some(&existing) => existing,
                None => {
                    let fresh = builder.add_state();
                    if let Some(fc) = lat.final_cost(arc.next_state) {
                        builder.set_final(fresh, fc);
                    }
                    map.insert(key.clone(), fresh);
                    queue.push_back((key.0, key.1, fresh));
                    fresh
                }
            };
            builder.add_arc(
                s_out,
                arc.word,
                arc.graph_cost,
                arc.acoustic_cost,
                arc.num_frames,
                dst_out,
            );
        }
    }
    builder.finish().map(|t| t.lattice)
}

/// True when every state except the start has in-degree exactly 1.
pub fn is_prefix_tree(lat: &Lattice) -> bool {
    let mut indeg = vec![0usize; lat.num_states()];
    for id in lat.arc_ids() {
        indeg[lat.arc(id).1.next_state.idx()] += 1;
    }
    indeg[0] == 0 && indeg[1..].iter().all(|&d| d == 1)
}
