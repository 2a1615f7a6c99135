//! Deterministic synthetic lattice generation.
//!
//! A desk-scale stand-in for first-pass decoder output. Lattices are
//! spindle-shaped: a branching (tree) opening, one densely connected
//! middle transition, and a merging (reverse-tree) close into a single
//! final state. The shape guarantees that no state with surplus
//! incoming arcs precedes a state with surplus outgoing arcs, so the
//! degree-based minimum-cover bound is exact on everything we generate.
//!
//! Costs land on a 1/64 grid, so path costs add exactly in binary
//! floating point and cost ties are reproducible rather than
//! rounding-noise accidents.

use crate::lattice::{Lattice, LatticeBuilder, StateId};
use crate::{Error, Result};

/// SplitMix64: tiny, seedable, stable across platforms.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform integer in [0, bound).
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        (self.next_u64() as f64 / u64::MAX as f64) < p
    }
}

/// Bounds for generated lattices.
#[derive(Debug, Clone)]
pub struct GeneratorProfile {
    /// Upper bound on states per lattice (hard limit 200).
    pub max_states: usize,
    /// Maximum out-degree of any state (hard limit 4).
    pub max_branching: usize,
    /// Number of distinct words to draw labels from.
    pub vocab_size: usize,
    /// Scale of the cost spread between sibling arcs, in nats. Larger
    /// values spread arc posteriors further apart.
    pub cost_noise: f64,
    /// Arc frame counts are drawn from 1..=max_frames.
    pub max_frames: u32,
    /// How strongly first-pass graph costs track the reference cost
    /// model, in [0, 1]. Real decoders score with a model of the same
    /// language the rescoring LM models, so their costs correlate; 0
    /// gives pure noise.
    pub lm_fidelity: f64,
    /// Number of branch-merge segments chained per lattice. One gives a
    /// single spindle (exactly minimal covers by the degree bound);
    /// more gives sausage-like lattices with repeated history merges.
    pub segments: usize,
}

impl Default for GeneratorProfile {
    fn default() -> Self {
        GeneratorProfile {
            max_states: 30,
            max_branching: 3,
            vocab_size: 50,
            cost_noise: 2.0,
            max_frames: 3,
            lm_fidelity: 0.7,
            segments: 1,
        }
    }
}

impl GeneratorProfile {
    pub fn validate(&self) -> Result<()> {
        if self.max_states < 2 || self.max_states > 200 {
            return Err(Error::Config(format!(
                "max_states must be in 2..=200, got {}",
                self.max_states
            )));
        }
        if self.max_branching < 1 || self.max_branching > 4 {
            return Err(Error::Config(format!(
                "max_branching must be in 1..=4, got {}",
                self.max_branching
            )));
        }
        if self.vocab_size < self.max_branching.max(2) {
            return Err(Error::Config(format!(
                "vocab_size must be at least {}, got {}",
                self.max_branching.max(2),
                self.vocab_size
            )));
        }
        if !(self.cost_noise >= 0.0 && self.cost_noise.is_finite()) {
            return Err(Error::Config("cost_noise must be finite and >= 0".into()));
        }
        if self.max_frames == 0 {
            return Err(Error::Config("max_frames must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lm_fidelity) {
            return Err(Error::Config(format!(
                "lm_fidelity must be in [0, 1], got {}",
                self.lm_fidelity
            )));
        }
        if self.segments < 1 || self.segments > 8 {
            return Err(Error::Config(format!(
                "segments must be in 1..=8, got {}",
                self.segments
            )));
        }
        Ok(())
    }
}

/// The word list a profile draws from; also handy for reference text.
pub fn vocabulary(size: usize) -> Vec<String> {
    (0..size)
        .map(|i| {
            let hi = (b'a' + (i / 26) as u8 % 26) as char;
            let lo = (b'a' + (i % 26) as u8) as char;
            format!("{hi}{lo}{}", i / 676)
        })
        .collect()
}

/// Cost on the 1/64 grid in [0, scale], plus a small floor.
fn grid_cost(rng: &mut SplitMix64, scale: f64) -> f64 {
    let steps = (scale * 64.0).max(1.0) as usize;
    (rng.range(1, steps.max(2)) as f64) / 64.0
}

/// Reference cost model the generator blends first-pass graph costs
/// toward: (history words, word) -> nats.
pub type CostModel<'a> = &'a dyn Fn(&[&str], &str) -> f64;

/// Generate one lattice.
pub fn generate_lattice(
    rng: &mut SplitMix64,
    profile: &GeneratorProfile,
    model: CostModel<'_>,
) -> Lattice {
    let vocab = vocabulary(profile.vocab_size);
    loop {
        if let Some(lat) = try_generate(rng, profile, &vocab, model) {
            return lat;
        }
    }
}

fn try_generate(
    rng: &mut SplitMix64,
    profile: &GeneratorProfile,
    vocab: &[String],
    model: CostModel<'_>,
) -> Option<Lattice> {
    // Plan a width profile: a chain of `segments` spindles sharing
    // width-1 waists. Each segment ascends (tree phase) to a peak and
    // merges back down; transitions are tagged with their phase and the
    // first merge transition of each segment takes extra arcs later.
    let budget = profile.max_states;
    let mut widths: Vec<usize> = vec![1];
    let mut tree_phase: Vec<bool> = Vec::new();
    let mut extra_arcs: Vec<bool> = Vec::new();
    let mut used = 1usize;
    for _seg in 0..profile.segments.max(1) {
        let ascend_layers = rng.range(1, 1 + (budget / (5 * profile.segments.max(1))).max(1));
        let mut ascended = 0;
        while ascended < ascend_layers {
            let cur = *widths.last().unwrap();
            let grow = rng.range(1, profile.max_branching.max(1));
            let next = (cur * grow).clamp(cur, cur * profile.max_branching);
            let next = next.min(budget.saturating_sub(used + 1).max(1));
            if next < cur {
                break;
            }
            widths.push(next);
            tree_phase.push(true);
            extra_arcs.push(false);
            used += next;
            ascended += 1;
            if used + 1 >= budget {
                break;
            }
        }
        let mut first_merge = true;
        loop {
            let cur = *widths.last().unwrap();
            if cur == 1 {
                break;
            }
            let shrink = rng.range(1, profile.max_branching.max(1));
            let mut next = cur.div_ceil(shrink);
            if next >= cur {
                next = cur - 1;
            }
            let next = next.max(1);
            if used + next > budget {
                if used + 1 > budget {
                    return None;
                }
                widths.push(1);
                tree_phase.push(false);
                extra_arcs.push(first_merge);
                used += 1;
                break;
            }
            widths.push(next);
            tree_phase.push(false);
            extra_arcs.push(first_merge);
            first_merge = false;
            used += next;
            if next == 1 {
                break;
            }
        }
        if used + 2 > budget {
            break;
        }
    }
    if widths.len() < 2 {
        return None;
    }

    let mut builder = LatticeBuilder::new();
    let word_ids: Vec<_> = vocab.iter().map(|w| builder.intern(w)).collect();
    // Allocate states layer by layer.
    let mut layers: Vec<Vec<StateId>> = Vec::with_capacity(widths.len());
    for &w in &widths {
        layers.push((0..w).map(|_| builder.add_state()).collect());
    }

    // Flat slot index per state for word bookkeeping and representative
    // histories (the word path the construction reached a state by).
    let total_states: usize = widths.iter().sum();
    let mut used_words: Vec<Vec<usize>> = vec![Vec::new(); total_states];
    let mut histories: Vec<Option<Vec<String>>> = vec![None; total_states];
    histories[0] = Some(Vec::new());
    let add_arc = |rng: &mut SplitMix64,
                   builder: &mut LatticeBuilder,
                   src: StateId,
                   dst: StateId,
                   used_words: &mut Vec<Vec<usize>>,
                   histories: &mut Vec<Option<Vec<String>>>| {
        // Distinct word per outgoing arc of a state.
        let taken = &mut used_words[src.idx()];
        let mut w = rng.below(vocab.len());
        while taken.contains(&w) {
            w = rng.below(vocab.len());
        }
        taken.push(w);
        let word = &vocab[w];
        // First-pass graph cost: reference-model cost blended with
        // noise, snapped to the 1/64 grid so sums stay exact.
        let noise = grid_cost(rng, profile.cost_noise.max(0.25));
        let history = histories[src.idx()].clone().expect("source already reached");
        let context: Vec<&str> = history.iter().map(|s| s.as_str()).collect();
        let truth = model(&context, word).clamp(0.0, 16.0);
        let blended = profile.lm_fidelity * truth + (1.0 - profile.lm_fidelity) * noise;
        let graph = ((blended * 64.0).round().max(1.0)) / 64.0;
        let acoustic = grid_cost(rng, profile.cost_noise.max(0.25) * 0.5);
        let frames = rng.range(1, profile.max_frames as usize) as u32;
        builder.add_arc(src, word_ids[w], graph, acoustic, frames, dst);
        if histories[dst.idx()].is_none() {
            let mut h = history;
            h.push(word.clone());
            histories[dst.idx()] = Some(h);
        }
    };

    for li in 0..layers.len() - 1 {
        let (left, right) = (&layers[li], &layers[li + 1]);
        if tree_phase[li] {
            // Tree growth: each right state picks one parent; every
            // left state must get at least one child.
            let mut out_deg = vec![0usize; left.len()];
            for (ri, &r) in right.iter().enumerate() {
                let pi = if ri < left.len() {
                    ri // guarantees every parent has a child
                } else {
                    // Prefer parents with spare branching capacity.
                    let mut p = rng.below(left.len());
                    let mut tries = 0;
                    while out_deg[p] >= profile.max_branching && tries < 8 {
                        p = rng.below(left.len());
                        tries += 1;
                    }
                    p
                };
                if out_deg[pi] >= profile.max_branching {
                    return None;
                }
                out_deg[pi] += 1;
                add_arc(rng, &mut builder, left[pi], r, &mut used_words, &mut histories);
            }
        } else {
            // Merge: each left state picks one child; every right state
            // must get at least one parent.
            for (lidx, &l) in left.iter().enumerate() {
                let ci = if lidx < right.len() { lidx } else { rng.below(right.len()) };
                add_arc(rng, &mut builder, l, right[ci], &mut used_words, &mut histories);
            }
        }
    }

    // Extra arcs on each segment's first merge transition for cover
    // variety: left states may take additional children while capacity
    // lasts. The degenerate two-state plan stays a single arc.
    if total_states > 2 {
        for li in 0..layers.len() - 1 {
            if !extra_arcs[li] {
                continue;
            }
            let (left, right) = (&layers[li], &layers[li + 1]);
            for &l in left.iter() {
                let current = used_words[l.idx()].len();
                let spare = profile.max_branching.saturating_sub(current);
                for _ in 0..spare {
                    if rng.chance(0.4) {
                        let ci = rng.below(right.len());
                        add_arc(rng, &mut builder, l, right[ci], &mut used_words, &mut histories);
                    }
                }
            }
        }
    }

    let final_state = *layers.last().unwrap().last().unwrap();
    builder.set_final(final_state, grid_cost(rng, 0.5));

    match builder.finish() {
        Ok(t) if t.trimmed_states == 0 => Some(t.lattice),
        _ => None,
    }
}

/// Generate a deterministic archive with an explicit reference cost
/// model for the fidelity blend.
pub fn generate_archive_with(
    seed: u64,
    count: usize,
    profile: &GeneratorProfile,
    model: CostModel<'_>,
) -> Result<Vec<(String, Lattice)>> {
    profile.validate()?;
    let mut rng = SplitMix64::new(seed);
    Ok((0..count)
        .map(|i| (format!("gen-{seed}-{i:05}"), generate_lattice(&mut rng, profile, model)))
        .collect())
}

/// Generate a deterministic archive of `count` lattices; first-pass
/// costs track the default hash scorer.
pub fn generate_archive(
    seed: u64,
    count: usize,
    profile: &GeneratorProfile,
) -> Result<Vec<(String, Lattice)>> {
    let reference = crate::score::HashScorer::default();
    generate_archive_with(seed, count, profile, &|ctx, w| reference.cost_in_context(ctx, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{lattice_to_string, parse_lattice};

    #[test]
    fn same_seed_is_byte_identical() {
        let profile = GeneratorProfile::default();
        let a = generate_archive(42, 20, &profile).unwrap();
        let b = generate_archive(42, 20, &profile).unwrap();
        for ((ua, la), (ub, lb)) in a.iter().zip(b.iter()) {
            assert_eq!(ua, ub);
            assert_eq!(lattice_to_string(ua, la), lattice_to_string(ub, lb));
        }
    }

    #[test]
    fn tiny_profile_gives_single_arc_lattices() {
        let profile = GeneratorProfile {
            max_states: 2,
            ..Default::default()
        };
        let archive = generate_archive(7, 10, &profile).unwrap();
        for (_, lat) in &archive {
            assert_eq!(lat.num_states(), 2);
            assert_eq!(lat.num_arcs(), 1);
        }
    }

    #[test]
    fn all_outputs_reparse_cleanly() {
        let profile = GeneratorProfile::default();
        for (utt, lat) in generate_archive(3, 50, &profile).unwrap() {
            let text = lattice_to_string(&utt, &lat);
            let reparsed = parse_lattice(&text).unwrap();
            assert_eq!(text, lattice_to_string(&utt, &reparsed));
            assert!(lat.num_states() <= 200);
            for s in lat.states() {
                assert!(lat.out(s).len() <= 4);
            }
        }
    }

    #[test]
    fn profile_bounds_are_enforced() {
        for bad in [
            GeneratorProfile { max_states: 1, ..Default::default() },
            GeneratorProfile { max_states: 500, ..Default::default() },
            GeneratorProfile { max_branching: 5, ..Default::default() },
            GeneratorProfile { max_frames: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
