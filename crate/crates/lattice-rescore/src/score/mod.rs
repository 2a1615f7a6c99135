//! LM scorers and the integration of their scores back into a lattice.
//!
//! A [`Scorer`] evaluates a batch of hypotheses and returns per-token
//! costs in nats, one cost per word plus one for the end-of-sentence
//! token. Scoring is always batched: the pipeline makes one scorer call
//! per lattice, never one per hypothesis.
//!
//! When an arc is shared by several covering hypotheses it has several
//! candidate neural costs; [`build_arc_scores`] reduces them to a single
//! per-arc estimate (plain average, softmax-weighted average over
//! history quality, or the cost from the lowest-cost covering path).
//! [`merge_scores`] then interpolates estimates into the lattice's graph
//! costs without touching structure or acoustics.

mod builtin;
mod external;

pub use builtin::{stable_hash64, BigramScorer, HashScorer, UniformScorer};
pub use external::{parse_response_line, parse_score_file, ExternalScorer, FileScorer};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use crate::cover::{cover_to_hypotheses, PathCover};
use crate::lattice::{fcmp, Arc, Lattice, StateId, UNK};
use crate::{Error, Result};

/// How to reduce multiple candidate costs to one per-arc estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMethod {
    /// Arithmetic mean of the candidate token costs.
    Average,
    /// Mean weighted by softmax of the negated history costs, so
    /// candidates with more probable histories weigh more.
    WeightedAverage,
    /// Token cost from the candidate whose covering path has the lowest
    /// total cost (cover order breaks ties).
    SemiViterbi,
}

impl std::str::FromStr for EstimationMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(EstimationMethod::Average),
            "weighted" | "weighted-average" => Ok(EstimationMethod::WeightedAverage),
            "semi-viterbi" => Ok(EstimationMethod::SemiViterbi),
            other => Err(Error::Config(format!(
                "unknown estimation method {other:?} (expected average, weighted, or semi-viterbi)"
            ))),
        }
    }
}

/// Mixing weight between the neural estimate and the original graph cost.
#[derive(Debug, Clone, Copy)]
pub struct InterpolationConfig {
    /// Weight on the neural LM, in [0, 1].
    pub lambda: f64,
}

impl InterpolationConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) || lambda.is_nan() {
            return Err(Error::Config(format!(
                "interpolation weight must be in [0, 1], got {lambda}"
            )));
        }
        Ok(InterpolationConfig { lambda })
    }
}

/// One hypothesis to score. Ids are echoed back by the scorer and may be
/// assigned by the caller (the archive pipeline uses globally unique
/// ids so offline score files need no per-utterance keying).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ScoreRequest {
    pub id: u64,
    pub tokens: Vec<String>,
}

/// Per-token costs for one hypothesis; `costs.len() == tokens.len() + 1`
/// (the last entry is the end-of-sentence cost).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreResponse {
    pub id: u64,
    pub costs: Vec<f64>,
}

/// A validated request/response pair; `responses[i]` answers
/// `requests[i]`.
#[derive(Debug, Clone)]
pub struct ScoreBatch {
    pub requests: Vec<ScoreRequest>,
    pub responses: Vec<ScoreResponse>,
}

/// A batched language-model scorer.
///
/// Implementations must be safe to call from multiple worker threads;
/// a scorer that can only serve one batch at a time (the subprocess
/// protocol) serializes internally and reports it via [`Scorer::serialized`].
pub trait Scorer: Send + Sync {
    /// Short identifier for logs and reports.
    fn kind(&self) -> &str;

    /// Vocabulary size; 0 means open vocabulary.
    fn vocab_size(&self) -> usize;

    /// Whether a word is in-vocabulary. Open-vocabulary scorers accept
    /// everything; callers map misses to `<unk>` before scoring.
    fn contains(&self, _word: &str) -> bool {
        true
    }

    /// True when concurrent batches are queued behind a lock rather
    /// than served in parallel.
    fn serialized(&self) -> bool {
        false
    }

    /// Score a batch of hypotheses. Responses may come back in any
    /// order; ids correlate them.
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>>;
}

/// Wrapper that counts batches and hypotheses, for accounting and the
/// batching-contract checks.
pub struct CountingScorer<S> {
    inner: S,
    calls: AtomicU64,
    hypotheses: AtomicU64,
}

impl<S: Scorer> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        CountingScorer {
            inner,
            calls: AtomicU64::new(0),
            hypotheses: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(AtomicOrdering::Relaxed)
    }

    pub fn hypotheses(&self) -> u64 {
        self.hypotheses.load(AtomicOrdering::Relaxed)
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn kind(&self) -> &str {
        self.inner.kind()
    }

    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn contains(&self, word: &str) -> bool {
        self.inner.contains(word)
    }

    fn serialized(&self) -> bool {
        self.inner.serialized()
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        self.calls.fetch_add(1, AtomicOrdering::Relaxed);
        self.hypotheses
            .fetch_add(requests.len() as u64, AtomicOrdering::Relaxed);
        self.inner.score_batch(requests)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn kind(&self) -> &str {
        (**self).kind()
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn contains(&self, word: &str) -> bool {
        (**self).contains(word)
    }
    fn serialized(&self) -> bool {
        (**self).serialized()
    }
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        (**self).score_batch(requests)
    }
}

impl Scorer for Box<dyn Scorer> {
    fn kind(&self) -> &str {
        (**self).kind()
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn contains(&self, word: &str) -> bool {
        (**self).contains(word)
    }
    fn serialized(&self) -> bool {
        (**self).serialized()
    }
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        (**self).score_batch(requests)
    }
}

/// Score a batch of hypotheses with one scorer invocation.
///
/// Out-of-vocabulary words are mapped to `<unk>` first. The responses
/// are validated (one per request, matching ids, `words + 1` finite
/// non-negative costs) and reordered to align with the requests.
pub fn score_hypotheses<S: Scorer>(scorer: &S, requests: Vec<ScoreRequest>) -> Result<ScoreBatch> {
    if requests.is_empty() {
        return Err(Error::Config("empty scoring request".into()));
    }
    for req in &requests {
        for tok in &req.tokens {
            if matches!(tok.as_str(), crate::lattice::EPS | crate::lattice::BOS | crate::lattice::EOS) {
                return Err(Error::Config(format!(
                    "structural token {tok:?} in scoring request {}",
                    req.id
                )));
            }
        }
    }
    let mapped: Vec<ScoreRequest> = requests
        .iter()
        .map(|req| ScoreRequest {
            id: req.id,
            tokens: req
                .tokens
                .iter()
                .map(|t| {
                    if scorer.contains(t) {
                        t.clone()
                    } else {
                        UNK.to_string()
                    }
                })
                .collect(),
        })
        .collect();

    let responses = scorer.score_batch(&mapped)?;
    if responses.len() != requests.len() {
        return Err(Error::ScorerProtocol(format!(
            "expected {} responses, got {}",
            requests.len(),
            responses.len()
        )));
    }
    let mut by_id: BTreeMap<u64, ScoreResponse> = BTreeMap::new();
    for resp in responses {
        if by_id.insert(resp.id, resp.clone()).is_some() {
            return Err(Error::ScorerProtocol(format!("duplicate response id {}", resp.id)));
        }
    }
    let mut aligned = Vec::with_capacity(requests.len());
    for req in &requests {
        let resp = by_id
            .remove(&req.id)
            .ok_or_else(|| Error::ScorerProtocol(format!("no response for id {}", req.id)))?;
        if resp.costs.len() != req.tokens.len() + 1 {
            return Err(Error::ScorerProtocol(format!(
                "id {}: expected {} costs, got {}",
                req.id,
                req.tokens.len() + 1,
                resp.costs.len()
            )));
        }
        if resp.costs.iter().any(|c| !c.is_finite() || *c < -1e-6) {
            return Err(Error::ScorerProtocol(format!(
                "id {}: costs must be finite and non-negative",
                req.id
            )));
        }
        aligned.push(resp);
    }
    Ok(ScoreBatch {
        requests,
        responses: aligned,
    })
}

/// One candidate neural cost for an arc (or a final stop).
#[derive(Debug, Clone, Copy)]
pub struct Candidate {
    /// Cover path index the candidate comes from.
    pub path: u32,
    /// Neural cost of this arc's token in that path.
    pub token_cost: f64,
    /// Sum of the path's neural token costs before this position.
    pub history_cost: f64,
    /// Total (original lattice) cost of the covering path.
    pub path_cost: f64,
}

/// Per-arc neural cost estimates with their candidate provenance.
///
/// Structural arcs carry no token and get no estimate; merging leaves
/// their costs untouched. Final states whose stop is not exercised by
/// any covering path likewise keep their original final cost.
#[derive(Debug)]
pub struct ArcScoreTable {
    pub method: EstimationMethod,
    pub candidates: Vec<Vec<Candidate>>,
    pub eos_candidates: BTreeMap<StateId, Vec<Candidate>>,
    /// Estimate per arc; None for structural arcs.
    pub estimates: Vec<Option<f64>>,
    /// End-of-sentence estimate per final state reached by a cover path.
    pub eos_estimates: BTreeMap<StateId, f64>,
}

fn reduce(method: EstimationMethod, candidates: &[Candidate]) -> f64 {
    debug_assert!(!candidates.is_empty());
    match method {
        EstimationMethod::Average => {
            candidates.iter().map(|c| c.token_cost).sum::<f64>() / candidates.len() as f64
        }
        EstimationMethod::WeightedAverage => {
            // Softmax over negated history costs, shifted for stability.
            let hi = candidates
                .iter()
                .map(|c| -c.history_cost)
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = candidates
                .iter()
                .map(|c| (-c.history_cost - hi).exp())
                .collect();
            let z: f64 = weights.iter().sum();
            candidates
                .iter()
                .zip(&weights)
                .map(|(c, w)| c.token_cost * w / z)
                .sum()
        }
        EstimationMethod::SemiViterbi => {
            candidates
                .iter()
                .min_by(|a, b| fcmp(a.path_cost, b.path_cost).then(a.path.cmp(&b.path)))
                .expect("nonempty candidates")
                .token_cost
        }
    }
}

/// Attach scored hypotheses back to arcs and reduce to one estimate per
/// arc. `batch` must align with `cover` hypothesis order (cover paths
/// first, then stop paths), which is what [`score_hypotheses`] on
/// [`cover_to_hypotheses`] output produces. Stop-path responses feed
/// only the end-of-sentence estimate at their final state.
pub fn build_arc_scores(
    lat: &Lattice,
    cover: &PathCover,
    batch: &ScoreBatch,
    method: EstimationMethod,
) -> Result<ArcScoreTable> {
    let mut candidates: Vec<Vec<Candidate>> = vec![Vec::new(); lat.num_arcs()];
    let mut eos_candidates: BTreeMap<StateId, Vec<Candidate>> = BTreeMap::new();

    let eos_candidate = |pi: usize, path: &crate::lattice::Path, costs: &[f64]| {
        let tokens = costs.len() - 1;
        Candidate {
            path: pi as u32,
            token_cost: costs[tokens],
            history_cost: costs[..tokens].iter().sum(),
            path_cost: path.cost,
        }
    };

    for (pi, cp) in cover.paths.iter().enumerate() {
        let costs = &batch.responses[pi].costs;
        let path_cost = cp.path.cost;
        let mut token_pos = 0usize;
        let mut history_cost = 0.0;
        for &arc_id in &cp.path.arcs {
            let word = lat.arc(arc_id).1.word;
            if lat.symbols().is_structural(word) {
                continue;
            }
            candidates[arc_id.idx()].push(Candidate {
                path: pi as u32,
                token_cost: costs[token_pos],
                history_cost,
                path_cost,
            });
            history_cost += costs[token_pos];
            token_pos += 1;
        }
        let end = cp.path.end_state(lat);
        eos_candidates.entry(end).or_default().push(Candidate {
            path: pi as u32,
            token_cost: costs[token_pos],
            history_cost,
            path_cost,
        });
    }
    for (si, (state, path)) in cover.stop_paths.iter().enumerate() {
        let pi = cover.paths.len() + si;
        let costs = &batch.responses[pi].costs;
        eos_candidates
            .entry(*state)
            .or_default()
            .push(eos_candidate(pi, path, costs));
    }

    let mut estimates = Vec::with_capacity(lat.num_arcs());
    for id in lat.arc_ids() {
        let arc = lat.arc(id).1;
        if lat.symbols().is_structural(arc.word) {
            estimates.push(None);
            continue;
        }
        let cands = &candidates[id.idx()];
        if cands.is_empty() {
            return Err(Error::UncoveredArc { arc: id.0 });
        }
        estimates.push(Some(reduce(method, cands)));
    }
    let eos_estimates = eos_candidates
        .iter()
        .map(|(&s, cands)| (s, reduce(method, cands)))
        .collect();

    Ok(ArcScoreTable {
        method,
        candidates,
        eos_candidates,
        estimates,
        eos_estimates,
    })
}

/// Interpolate estimates into the lattice: each arc's graph cost becomes
/// `lambda * estimate + (1 - lambda) * graph_cost`, final costs blend
/// with the end-of-sentence estimates the same way. Acoustic costs,
/// words, frames, state numbering, and arc order are untouched.
pub fn merge_scores(lat: &Lattice, table: &ArcScoreTable, cfg: InterpolationConfig) -> Result<Lattice> {
    if table.estimates.len() != lat.num_arcs() {
        return Err(Error::Config(format!(
            "score table covers {} arcs, lattice has {}",
            table.estimates.len(),
            lat.num_arcs()
        )));
    }
    let lambda = cfg.lambda;
    let mut clone = lat.clone();
    clone.remap_costs(|arc_id, arc: &Arc| match table.estimates[arc_id.idx()] {
        Some(est) => lambda * est + (1.0 - lambda) * arc.graph_cost,
        None => arc.graph_cost,
    });
    clone.remap_finals(|state, fc| match table.eos_estimates.get(&state) {
        Some(&est) => lambda * est + (1.0 - lambda) * fc,
        None => fc,
    });
    Ok(clone)
}

/// Rescore a lattice in place (structurally): build its cover, score the
/// hypotheses in one batch, estimate per-arc costs, and interpolate.
pub fn replace_scores<S: Scorer>(
    lat: &Lattice,
    scorer: &S,
    method: EstimationMethod,
    cfg: InterpolationConfig,
) -> Result<Lattice> {
    let cover = crate::cover::constrained_path_cover(lat);
    if cover.is_empty() {
        return Ok(lat.clone());
    }
    let requests: Vec<ScoreRequest> = cover_to_hypotheses(lat, &cover)
        .into_iter()
        .map(|h| ScoreRequest {
            id: h.path_id as u64,
            tokens: h.words,
        })
        .collect();
    let batch = score_hypotheses(scorer, requests)?;
    let table = build_arc_scores(lat, &cover, &batch, method)?;
    merge_scores(lat, &table, cfg)
}
