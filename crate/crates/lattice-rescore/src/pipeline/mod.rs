//! End-to-end rescoring strategies, metrics, and the benchmark sweep.
//!
//! Strategies:
//! - non-iterative: prune, expand by posterior threshold, convert to a
//!   path cover, score in one batch, merge back.
//! - iterative: first replace scores on the pruned lattice without
//!   expanding (structure fixed), then run the non-iterative pass on
//!   the result; two scorer batches per lattice.
//! - replace: the structure-fixed replacement alone.
//! - nbest: classical baseline; extract the n cheapest paths, rescore
//!   each exactly, pick the best combination.
//!
//! Archives are processed with utterance-level parallelism: one lattice
//! per task, results collected in archive order, so output bytes do not
//! depend on thread scheduling. Hypothesis ids are assigned globally
//! across the archive in a serial pass between cover construction and
//! scoring, which keeps offline score files (`to-list` + score file)
//! consistent with in-process scoring.

pub mod generate;

pub use generate::{generate_archive, GeneratorProfile, SplitMix64};

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::cover::{constrained_path_cover, cover_to_hypotheses, PathCover};
use crate::expand::{expand_ngram, expand_posterior, ExpansionConfig};
use crate::lattice::{fcmp, ArcId, Lattice, Path, StateId};
use crate::score::{
    build_arc_scores, merge_scores, replace_scores, score_hypotheses, EstimationMethod,
    InterpolationConfig, ScoreRequest, Scorer,
};
use crate::viterbi::{best_path, forward_backward, Semiring};
use crate::{Error, Result};

/// Which rescoring pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    NonIterative,
    Iterative,
    ReplaceOnly,
    NBest,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non-iterative" => Ok(Strategy::NonIterative),
            "iterative" => Ok(Strategy::Iterative),
            "replace" => Ok(Strategy::ReplaceOnly),
            "nbest" => Ok(Strategy::NBest),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected non-iterative, iterative, replace, or nbest)"
            ))),
        }
    }
}

/// Full parameter set for rescoring.
#[derive(Debug, Clone)]
pub struct RescoreConfig {
    pub strategy: Strategy,
    /// Posterior threshold for expansion.
    pub epsilon: f64,
    /// Beam applied before expansion, in nats.
    pub beam: f64,
    pub estimation: EstimationMethod,
    /// Interpolation weight on the neural LM.
    pub lambda: f64,
    /// Stage-1 weight for the iterative strategy (defaults to lambda).
    pub lambda1: Option<f64>,
    /// List size for the nbest strategy.
    pub nbest: usize,
    pub posterior_semiring: Semiring,
}

impl Default for RescoreConfig {
    fn default() -> Self {
        RescoreConfig {
            strategy: Strategy::NonIterative,
            epsilon: 0.5,
            beam: 8.0,
            estimation: EstimationMethod::SemiViterbi,
            lambda: 0.8,
            lambda1: None,
            nbest: 20,
            posterior_semiring: Semiring::Sum,
        }
    }
}

impl RescoreConfig {
    pub fn validate(&self) -> Result<()> {
        InterpolationConfig::new(self.lambda)?;
        if let Some(l1) = self.lambda1 {
            InterpolationConfig::new(l1)?;
        }
        if matches!(self.strategy, Strategy::NonIterative | Strategy::Iterative) {
            ExpansionConfig {
                epsilon: self.epsilon,
                posterior_semiring: self.posterior_semiring,
            }
            .validate()?;
        }
        if self.beam < 0.0 || !self.beam.is_finite() {
            return Err(Error::Config(format!("beam must be finite and >= 0, got {}", self.beam)));
        }
        if self.strategy == Strategy::NBest && self.nbest == 0 {
            return Err(Error::Config("nbest must be >= 1".into()));
        }
        Ok(())
    }

    fn expansion(&self) -> ExpansionConfig {
        ExpansionConfig {
            epsilon: self.epsilon,
            posterior_semiring: self.posterior_semiring,
        }
    }
}

fn score_cover<S: Scorer>(
    lat: &Lattice,
    cover: &PathCover,
    scorer: &S,
    id_base: u64,
    method: EstimationMethod,
    lambda: f64,
) -> Result<Lattice> {
    if cover.is_empty() {
        return Ok(lat.clone());
    }
    let requests: Vec<ScoreRequest> = cover_to_hypotheses(lat, cover)
        .into_iter()
        .map(|h| ScoreRequest {
            id: id_base + h.path_id as u64,
            tokens: h.words,
        })
        .collect();
    let batch = score_hypotheses(scorer, requests)?;
    let table = build_arc_scores(lat, cover, &batch, method)?;
    merge_scores(lat, &table, InterpolationConfig::new(lambda)?)
}

/// Prune, expand, cover, score (one batch), merge. Returns the rescored
/// expanded lattice.
pub fn rescore_non_iterative<S: Scorer>(
    lat: &Lattice,
    scorer: &S,
    cfg: &RescoreConfig,
) -> Result<Lattice> {
    cfg.validate()?;
    let pruned = lat.prune(cfg.beam)?;
    let expanded = expand_posterior(&pruned, &cfg.expansion())?;
    let cover = constrained_path_cover(&expanded);
    score_cover(&expanded, &cover, scorer, 0, cfg.estimation, cfg.lambda)
}

/// Replace scores on the pruned unexpanded lattice, then run the
/// non-iterative pass on the result. Exactly two scorer batches.
pub fn rescore_iterative<S: Scorer>(
    lat: &Lattice,
    scorer: &S,
    cfg: &RescoreConfig,
) -> Result<Lattice> {
    cfg.validate()?;
    let pruned = lat.prune(cfg.beam)?;
    let lambda1 = cfg.lambda1.unwrap_or(cfg.lambda);
    let replaced = replace_scores(
        &pruned,
        scorer,
        cfg.estimation,
        InterpolationConfig::new(lambda1)?,
    )?;
    // The replacement stage already pruned; skip the second beam pass so
    // the stage-2 input is exactly the replaced lattice.
    let expanded = expand_posterior(&replaced, &cfg.expansion())?;
    let cover = constrained_path_cover(&expanded);
    score_cover(&expanded, &cover, scorer, 0, cfg.estimation, cfg.lambda)
}

/// The n cheapest complete paths, in (cost, lexicographic) order.
///
/// Best-first search over path prefixes with the exact completion cost
/// from max-semiring backward scores as the heuristic, so prefixes pop
/// in true final-cost order; ties at the n-th cost are all collected and
/// resolved by the global path ordering.
pub fn nbest_paths(lat: &Lattice, n: usize) -> Vec<Path> {
    if n == 0 {
        return Vec::new();
    }
    let fb = forward_backward(lat, Semiring::Max);

    #[derive(Debug)]
    struct Item {
        est: f64,
        state: StateId,
        arcs: Vec<ArcId>,
        cost: f64,
    }
    impl PartialEq for Item {
        fn eq(&self, other: &Self) -> bool {
            self.est == other.est
        }
    }
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // Reverse for a min-heap.
            fcmp(other.est, self.est)
        }
    }

    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Item {
        est: -fb.beta[0],
        state: lat.start(),
        arcs: Vec::new(),
        cost: 0.0,
    });
    let mut complete: Vec<Path> = Vec::new();
    let mut cutoff = f64::INFINITY;
    while let Some(item) = heap.pop() {
        if item.est > cutoff {
            break;
        }
        if let Some(fc) = lat.final_cost(item.state) {
            let path = Path {
                arcs: item.arcs.clone(),
                cost: item.cost + fc,
            };
            complete.push(path);
            if complete.len() == n {
                // Keep collecting exact ties beyond n.
                cutoff = complete
                    .iter()
                    .map(|p| p.cost)
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        for (id, arc) in lat.out_with_ids(item.state) {
            let cost = item.cost + arc.cost();
            let est = cost + -fb.beta[arc.next_state.idx()];
            if est > cutoff {
                continue;
            }
            let mut arcs = item.arcs.clone();
            arcs.push(id);
            heap.push(Item {
                est,
                state: arc.next_state,
                arcs,
                cost,
            });
        }
    }
    complete.sort_by(|a, b| lat.cmp_paths(a, b));
    complete.truncate(n);
    complete
}

/// N-best rescoring: score the n cheapest paths exactly in one batch and
/// return the path minimizing
/// `lambda * neural + (1 - lambda) * graph + acoustic`.
pub fn rescore_nbest<S: Scorer>(
    lat: &Lattice,
    scorer: &S,
    n: usize,
    lambda: f64,
) -> Result<Path> {
    if n == 0 {
        return Err(Error::Config("nbest must be >= 1".into()));
    }
    let interp = InterpolationConfig::new(lambda)?;
    let paths = nbest_paths(lat, n);
    debug_assert!(!paths.is_empty(), "valid lattices have at least one path");
    let requests: Vec<ScoreRequest> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| ScoreRequest {
            id: i as u64,
            tokens: p.hypothesis_words(lat),
        })
        .collect();
    let batch = score_hypotheses(scorer, requests)?;
    let rescored_cost = |i: usize| {
        let neural: f64 = batch.responses[i].costs.iter().sum();
        let p = &paths[i];
        interp.lambda * neural + (1.0 - interp.lambda) * p.graph_cost(lat) + p.acoustic_cost(lat)
    };
    let best = (0..paths.len())
        .min_by(|&a, &b| {
            fcmp(rescored_cost(a), rescored_cost(b)).then_with(|| {
                lat.cmp_word_seqs(&paths[a].words(lat), &paths[b].words(lat))
            })
        })
        .expect("nonempty");
    Ok(paths[best].clone())
}

/// Aggregate evaluation results for an archive.
#[derive(Debug, Clone)]
pub struct Metrics {
    /// Word error rate, percent.
    pub wer: f64,
    /// Mean lattice depth (arcs per frame).
    pub lattice_depth: f64,
    /// Mean best-path log-likelihood, nats.
    pub best_path_loglik: f64,
    pub scorer_calls: u64,
    pub hypotheses_scored: u64,
}

/// Token-level Levenshtein distance.
pub fn levenshtein(reference: &[String], hypothesis: &[String]) -> usize {
    if reference.is_empty() {
        return hypothesis.len();
    }
    if hypothesis.is_empty() {
        return reference.len();
    }
    let m = hypothesis.len();
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut curr = vec![0usize; m + 1];
    for (i, r) in reference.iter().enumerate() {
        curr[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

/// Compute WER, mean depth, and mean best-path log-likelihood of an
/// archive against references keyed by utterance id. Scorer accounting
/// fields are zero; the pipeline runner fills them in.
pub fn compute_metrics(
    refs: &BTreeMap<String, Vec<String>>,
    hyps: &[(String, Lattice)],
) -> Result<Metrics> {
    let mut edits = 0usize;
    let mut ref_words = 0usize;
    let mut depth_sum = 0.0;
    let mut loglik_sum = 0.0;
    for (utt, lat) in hyps {
        let reference = refs
            .get(utt)
            .ok_or_else(|| Error::MissingReference(utt.clone()))?;
        let best = best_path(lat);
        let words = best.hypothesis_words(lat);
        edits += levenshtein(reference, &words);
        ref_words += reference.len();
        depth_sum += lat.depth();
        loglik_sum += -best.cost;
    }
    let n = hyps.len().max(1) as f64;
    Ok(Metrics {
        wer: if ref_words == 0 {
            0.0
        } else {
            edits as f64 / ref_words as f64 * 100.0
        },
        lattice_depth: depth_sum / n,
        best_path_loglik: loglik_sum / n,
        scorer_calls: 0,
        hypotheses_scored: 0,
    })
}

/// Per-utterance accounting from an archive run.
#[derive(Debug, Clone, Default)]
pub struct ArchiveStats {
    pub scorer_calls: u64,
    pub hypotheses_scored: u64,
}

/// Rescore a whole archive with utterance-level parallelism and
/// archive-global hypothesis ids. Output order matches input order.
pub fn rescore_archive<S: Scorer>(
    entries: &[(String, Lattice)],
    scorer: &S,
    cfg: &RescoreConfig,
) -> Result<(Vec<(String, Lattice)>, ArchiveStats)> {
    cfg.validate()?;
    match cfg.strategy {
        Strategy::NonIterative => rescore_archive_staged(entries, scorer, cfg, false, true),
        Strategy::Iterative => rescore_archive_staged(entries, scorer, cfg, true, true),
        Strategy::ReplaceOnly => rescore_archive_staged(entries, scorer, cfg, false, false),
        Strategy::NBest => Err(Error::Config(
            "nbest strategy returns paths, not lattices; use nbest_archive".into(),
        )),
    }
}

/// Prepared per-lattice state between cover construction and scoring.
struct Staged {
    utt: String,
    lattice: Lattice,
    cover: PathCover,
}

fn rescore_archive_staged<S: Scorer>(
    entries: &[(String, Lattice)],
    scorer: &S,
    cfg: &RescoreConfig,
    iterative: bool,
    expand: bool,
) -> Result<(Vec<(String, Lattice)>, ArchiveStats)> {
    let mut hypotheses_scored = 0u64;
    let mut scorer_calls = 0u64;

    let mut current: Vec<(String, Lattice)> = entries.to_vec();
    if iterative {
        let lambda1 = cfg.lambda1.unwrap_or(cfg.lambda);
        let replaced: Result<Vec<_>> = current
            .par_iter()
            .map(|(utt, lat)| {
                let pruned = lat.prune(cfg.beam)?;
                let out = replace_scores(
                    &pruned,
                    scorer,
                    cfg.estimation,
                    InterpolationConfig::new(lambda1)?,
                )?;
                Ok((utt.clone(), out))
            })
            .collect();
        current = replaced?;
        scorer_calls += current.len() as u64;
        // Hypotheses from stage 1 are counted by the scorer wrapper, not
        // here; the covers are not retained.
    }

    // Stage A: prune, expand, cover (parallel).
    let staged: Result<Vec<Staged>> = current
        .par_iter()
        .map(|(utt, lat)| {
            let pruned = if iterative { lat.clone() } else { lat.prune(cfg.beam)? };
            let expanded = if expand {
                expand_posterior(&pruned, &cfg.expansion())?
            } else {
                pruned
            };
            let cover = constrained_path_cover(&expanded);
            Ok(Staged {
                utt: utt.clone(),
                lattice: expanded,
                cover,
            })
        })
        .collect();
    let staged = staged?;

    // Serial pass: archive-global hypothesis id bases.
    let mut bases = Vec::with_capacity(staged.len());
    let mut next_id = 0u64;
    for s in &staged {
        bases.push(next_id);
        next_id += s.cover.num_hypotheses() as u64;
        hypotheses_scored += s.cover.num_hypotheses() as u64;
        if !s.cover.is_empty() {
            scorer_calls += 1;
        }
    }

    // Stage B: score and merge (parallel).
    let results: Result<Vec<(String, Lattice)>> = staged
        .par_iter()
        .zip(bases.par_iter())
        .map(|(s, &base)| {
            let out = score_cover(&s.lattice, &s.cover, scorer, base, cfg.estimation, cfg.lambda)?;
            Ok((s.utt.clone(), out))
        })
        .collect();
    Ok((
        results?,
        ArchiveStats {
            scorer_calls,
            hypotheses_scored,
        },
    ))
}

/// N-best rescoring over an archive; returns the chosen hypothesis per
/// utterance.
pub fn nbest_archive<S: Scorer>(
    entries: &[(String, Lattice)],
    scorer: &S,
    n: usize,
    lambda: f64,
) -> Result<Vec<(String, Vec<String>)>> {
    let results: Result<Vec<_>> = entries
        .par_iter()
        .map(|(utt, lat)| {
            let path = rescore_nbest(lat, scorer, n, lambda)?;
            Ok((utt.clone(), path.hypothesis_words(lat)))
        })
        .collect();
    results
}

/// One row of the benchmark sweep.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub strategy: String,
    pub method: String,
    /// Epsilon for posterior expansion, order for n-gram.
    pub param: f64,
    pub mean_depth: f64,
    /// Mean best-path log-likelihood as reported by the rescored
    /// lattice itself (carries estimation error).
    pub mean_best_path_loglik: f64,
    /// Mean log-likelihood of the chosen best path under exact scoring
    /// (neural sequence cost plus acoustics): selection quality.
    pub mean_exact_loglik: f64,
    pub hypotheses_scored: u64,
    pub scorer_calls: u64,
    pub wall_ms: Option<u128>,
}

impl BenchRow {
    pub fn csv_header() -> &'static str {
        "strategy,method,param,mean_depth,mean_best_path_loglik,mean_exact_loglik,hypotheses_scored,scorer_calls"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.strategy,
            self.method,
            self.param,
            self.mean_depth,
            self.mean_best_path_loglik,
            self.mean_exact_loglik,
            self.hypotheses_scored,
            self.scorer_calls
        )
    }
}

/// Mean exact selection quality: score each rescored lattice's best
/// path in one batch and combine with its acoustics.
fn mean_exact_loglik<S: Scorer>(rescored: &[(String, Lattice)], scorer: &S) -> Result<f64> {
    if rescored.is_empty() {
        return Ok(0.0);
    }
    let chosen: Vec<Path> = rescored.iter().map(|(_, l)| best_path(l)).collect();
    let requests: Vec<ScoreRequest> = chosen
        .iter()
        .zip(rescored.iter())
        .enumerate()
        .map(|(i, (p, (_, lat)))| ScoreRequest {
            id: i as u64,
            tokens: p.hypothesis_words(lat),
        })
        .collect();
    let batch = score_hypotheses(scorer, requests)?;
    let total: f64 = chosen
        .iter()
        .zip(rescored.iter())
        .zip(batch.responses.iter())
        .map(|((p, (_, lat)), resp)| {
            let nn: f64 = resp.costs.iter().sum();
            -(nn + p.acoustic_cost(lat))
        })
        .sum();
    Ok(total / rescored.len() as f64)
}

/// Sweep posterior expansion over `epsilons` and n-gram expansion over
/// `orders` with the non-iterative strategy, reporting mean expanded
/// depth and mean rescored best-path log-likelihood per configuration.
pub fn bench_sweep<S: Scorer>(
    entries: &[(String, Lattice)],
    scorer: &S,
    cfg: &RescoreConfig,
    epsilons: &[f64],
    orders: &[usize],
    timing: bool,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &eps in epsilons {
        let run_cfg = RescoreConfig {
            epsilon: eps,
            strategy: Strategy::NonIterative,
            ..cfg.clone()
        };
        let start = std::time::Instant::now();
        let counting = crate::score::CountingScorer::new(scorer);
        let (rescored, stats) = rescore_archive(entries, &counting, &run_cfg)?;
        rows.push(BenchRow {
            strategy: "non-iterative".into(),
            method: "posterior".into(),
            param: eps,
            mean_depth: mean(rescored.iter().map(|(_, l)| l.depth())),
            mean_best_path_loglik: mean(rescored.iter().map(|(_, l)| -best_path(l).cost)),
            mean_exact_loglik: mean_exact_loglik(&rescored, scorer)?,
            hypotheses_scored: stats.hypotheses_scored,
            scorer_calls: stats.scorer_calls,
            wall_ms: timing.then(|| start.elapsed().as_millis()),
        });
    }
    for &order in orders {
        let start = std::time::Instant::now();
        let counting = crate::score::CountingScorer::new(scorer);
        let result: Result<Vec<(Lattice, usize)>> = entries
            .par_iter()
            .map(|(_, lat)| {
                let pruned = lat.prune(cfg.beam)?;
                let expanded = expand_ngram(&pruned, order)?;
                let cover = constrained_path_cover(&expanded);
                let size = cover.num_hypotheses();
                let out = score_cover(&expanded, &cover, &counting, 0, cfg.estimation, cfg.lambda)?;
                Ok((out, size))
            })
            .collect();
        let result = result?;
        let rescored: Vec<(String, Lattice)> = entries
            .iter()
            .zip(result.iter())
            .map(|((utt, _), (l, _))| (utt.clone(), l.clone()))
            .collect();
        rows.push(BenchRow {
            strategy: "non-iterative".into(),
            method: "ngram".into(),
            param: order as f64,
            mean_depth: mean(result.iter().map(|(l, _)| l.depth())),
            mean_best_path_loglik: mean(result.iter().map(|(l, _)| -best_path(l).cost)),
            mean_exact_loglik: mean_exact_loglik(&rescored, scorer)?,
            hypotheses_scored: result.iter().map(|(_, s)| *s as u64).sum(),
            scorer_calls: counting.calls(),
            wall_ms: timing.then(|| start.elapsed().as_millis()),
        });
    }
    Ok(rows)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
