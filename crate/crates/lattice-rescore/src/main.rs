//! `lattice-rescore`: command-line front end for the lattice rescoring
//! toolkit. Subcommands read a lattice archive from a file or stdin and
//! write results to a file or stdout, so stages compose with pipes:
//!
//! ```text
//! lattice-rescore generate --seed 1 --count 10 \
//!   | lattice-rescore prune --beam 8 \
//!   | lattice-rescore expand --epsilon 0.5 \
//!   | lattice-rescore to-list
//! ```
//!
//! Exit codes: 0 success, 1 validation/usage errors, 2 scorer protocol
//! or availability errors.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use lattice_rescore::lattice::{lattice_to_string, parse_archive, ArchiveEntry};
use lattice_rescore::pipeline::{
    bench_sweep, compute_metrics, generate_archive, nbest_archive, rescore_archive,
    GeneratorProfile, RescoreConfig, Strategy,
};
use lattice_rescore::score::{
    BigramScorer, ExternalScorer, FileScorer, HashScorer, Scorer, UniformScorer,
};
use lattice_rescore::viterbi::{arc_posteriors, Semiring};
use lattice_rescore::{Error, Lattice, Result};

#[derive(Parser)]
#[command(name = "lattice-rescore", version, about = "Lattice rescoring toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct IoArgs {
    /// Input archive path, or - for stdin.
    #[arg(default_value = "-")]
    input: String,
    /// Output path, or - for stdout.
    #[arg(short, long, default_value = "-")]
    output: String,
}

#[derive(Args, Clone)]
struct ScorerArgs {
    /// Scorer: uniform[:VOCAB] | bigram:TEXT_PATH | hash | exec:CMD | scores:PATH
    #[arg(long, default_value = "hash")]
    scorer: String,
    /// Per-arc estimation: average | weighted | semi-viterbi
    #[arg(long, default_value = "semi-viterbi")]
    estimation: String,
    /// Interpolation weight on the neural LM, in [0, 1].
    #[arg(long, default_value_t = 0.8)]
    lambda: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Beam-prune an archive.
    Prune {
        #[command(flatten)]
        io: IoArgs,
        /// Beam width in nats.
        #[arg(long, default_value_t = 8.0)]
        beam: f64,
    },
    /// Expand lattices so likely arcs get unique histories.
    Expand {
        #[command(flatten)]
        io: IoArgs,
        /// posterior | ngram
        #[arg(long, default_value = "posterior")]
        method: String,
        /// Posterior threshold in (0, 1) for --method posterior.
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// History order (>= 2) for --method ngram.
        #[arg(long, default_value_t = 3)]
        order: usize,
        /// sum | max
        #[arg(long, default_value = "sum")]
        posterior_semiring: String,
    },
    /// Annotate every arc with its posterior.
    Posteriors {
        #[command(flatten)]
        io: IoArgs,
        /// sum | max
        #[arg(long, default_value = "sum")]
        posterior_semiring: String,
    },
    /// Convert lattices to hypothesis lists (constrained path covers).
    ToList {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Rescore an archive with a language model scorer.
    Rescore {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        scorer: ScorerArgs,
        /// non-iterative | iterative | replace | nbest
        #[arg(long, default_value = "non-iterative")]
        strategy: String,
        /// Beam applied before expansion.
        #[arg(long, default_value_t = 8.0)]
        beam: f64,
        /// Posterior threshold for expansion.
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// Stage-1 interpolation weight for the iterative strategy.
        #[arg(long)]
        lambda1: Option<f64>,
        /// List size for the nbest strategy.
        #[arg(long, default_value_t = 20)]
        nbest_n: usize,
        /// sum | max
        #[arg(long, default_value = "sum")]
        posterior_semiring: String,
        /// Worker threads (0 = automatic).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Score an archive against reference transcripts.
    Metrics {
        #[command(flatten)]
        io: IoArgs,
        /// Reference file: one `UTT_ID w1 w2 ...` line per utterance.
        #[arg(long)]
        refs: PathBuf,
    },
    /// Generate a deterministic synthetic archive.
    Generate {
        /// Output path, or - for stdout.
        #[arg(short, long, default_value = "-")]
        output: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 30)]
        max_states: usize,
        #[arg(long, default_value_t = 3)]
        branching: usize,
        #[arg(long, default_value_t = 50)]
        vocab_size: usize,
        #[arg(long, default_value_t = 2.0)]
        cost_noise: f64,
        #[arg(long, default_value_t = 3)]
        max_frames: u32,
        /// Correlation of first-pass costs with the hash reference model.
        #[arg(long, default_value_t = 0.7)]
        lm_fidelity: f64,
        /// Branch-merge segments per lattice.
        #[arg(long, default_value_t = 1)]
        segments: usize,
    },
    /// Sweep expansion settings and report depth/likelihood tradeoffs.
    Bench {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        scorer: ScorerArgs,
        /// Beam applied before expansion.
        #[arg(long, default_value_t = 8.0)]
        beam: f64,
        /// Comma-separated posterior thresholds.
        #[arg(long, default_value = "0.5,0.1,0.05,0.005")]
        epsilons: String,
        /// Comma-separated n-gram orders.
        #[arg(long, default_value = "2,3,4")]
        orders: String,
        /// Also write the table as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Measure wall time (off by default so output is deterministic).
        #[arg(long, default_value_t = false)]
        timing: bool,
        /// sum | max
        #[arg(long, default_value = "sum")]
        posterior_semiring: String,
    },
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf)?;
        Ok(buf)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

fn write_output(path: &str, content: &str) -> Result<()> {
    if path == "-" {
        std::io::stdout().write_all(content.as_bytes())?;
        Ok(())
    } else {
        std::fs::write(path, content)?;
        Ok(())
    }
}

fn read_archive(path: &str) -> Result<Vec<ArchiveEntry>> {
    let entries = parse_archive(&read_input(path)?)?;
    for e in &entries {
        if e.trimmed_states > 0 {
            eprintln!(
                "warning: utterance {}: trimmed {} unreachable state(s)",
                e.utt, e.trimmed_states
            );
        }
    }
    Ok(entries)
}

fn archive_pairs(entries: Vec<ArchiveEntry>) -> Vec<(String, Lattice)> {
    entries.into_iter().map(|e| (e.utt, e.lattice)).collect()
}

fn archive_string(entries: &[(String, Lattice)]) -> String {
    let mut out = String::new();
    for (i, (utt, lat)) in entries.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&lattice_to_string(utt, lat));
    }
    out
}

fn make_scorer(spec: &str) -> Result<Box<dyn Scorer>> {
    if spec == "hash" {
        return Ok(Box::new(HashScorer::default()));
    }
    if spec == "uniform" {
        return Ok(Box::new(UniformScorer::new(10_000)));
    }
    if let Some(v) = spec.strip_prefix("uniform:") {
        let v: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("bad uniform vocab size {v:?}")))?;
        return Ok(Box::new(UniformScorer::new(v)));
    }
    if let Some(path) = spec.strip_prefix("bigram:") {
        return Ok(Box::new(BigramScorer::from_file(std::path::Path::new(path))?));
    }
    if let Some(cmd) = spec.strip_prefix("exec:") {
        return Ok(Box::new(ExternalScorer::spawn(cmd)?));
    }
    if let Some(path) = spec.strip_prefix("scores:") {
        return Ok(Box::new(FileScorer::from_file(std::path::Path::new(path))?));
    }
    Err(Error::Config(format!(
        "unknown scorer {spec:?} (expected uniform[:N], bigram:PATH, hash, exec:CMD, or scores:PATH)"
    )))
}

fn parse_refs(text: &str) -> BTreeMap<String, Vec<String>> {
    let mut refs = BTreeMap::new();
    for line in text.lines() {
        let mut fields = line.split_whitespace();
        if let Some(utt) = fields.next() {
            refs.insert(utt.to_string(), fields.map(|w| w.to_string()).collect());
        }
    }
    refs
}

fn run() -> Result<()> {
    let cli = Cli::try_parse().map_err(|e| {
        // clap's own exit code conventions differ; keep usage errors at 1.
        e.print().ok();
        std::process::exit(if e.use_stderr() { 1 } else { 0 });
    });
    let cli = match cli {
        Ok(c) => c,
        Err(_) => unreachable!(),
    };

    match cli.command {
        Command::Prune { io, beam } => {
            let entries = archive_pairs(read_archive(&io.input)?);
            let mut out = Vec::with_capacity(entries.len());
            for (utt, lat) in entries {
                out.push((utt, lat.prune(beam)?));
            }
            write_output(&io.output, &archive_string(&out))
        }
        Command::Expand {
            io,
            method,
            epsilon,
            order,
            posterior_semiring,
        } => {
            let semiring: Semiring = posterior_semiring.parse()?;
            let entries = archive_pairs(read_archive(&io.input)?);
            let mut out = Vec::with_capacity(entries.len());
            for (utt, lat) in entries {
                let expanded = match method.as_str() {
                    "posterior" => lattice_rescore::expand::expand_posterior(
                        &lat,
                        &lattice_rescore::expand::ExpansionConfig {
                            epsilon,
                            posterior_semiring: semiring,
                        },
                    )?,
                    "ngram" => lattice_rescore::expand::expand_ngram(&lat, order)?,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown expansion method {other:?} (expected posterior or ngram)"
                        )))
                    }
                };
                out.push((utt, expanded));
            }
            write_output(&io.output, &archive_string(&out))
        }
        Command::Posteriors {
            io,
            posterior_semiring,
        } => {
            let semiring: Semiring = posterior_semiring.parse()?;
            let entries = archive_pairs(read_archive(&io.input)?);
            let mut out = String::new();
            for (i, (utt, lat)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let posts = arc_posteriors(lat, semiring);
                out.push_str(&format!("UTT {utt}\n"));
                for s in lat.states() {
                    for (id, arc) in lat.out_with_ids(s) {
                        out.push_str(&format!(
                            "{} {} {} {},{},{} # post={}\n",
                            s,
                            arc.next_state,
                            lat.word_name(arc.word),
                            arc.graph_cost,
                            arc.acoustic_cost,
                            arc.num_frames,
                            posts[id.idx()]
                        ));
                    }
                }
                for (s, cost) in lat.finals() {
                    out.push_str(&format!("{s} {cost}\n"));
                }
            }
            write_output(&io.output, &out)
        }
        Command::ToList { io } => {
            let entries = archive_pairs(read_archive(&io.input)?);
            let mut out = String::new();
            let mut next_pid = 0u64;
            for (utt, lat) in &entries {
                out.push_str(&format!("UTT {utt}\n"));
                let cover = lattice_rescore::cover::constrained_path_cover(lat);
                for hyp in lattice_rescore::cover::cover_to_hypotheses(lat, &cover) {
                    let idx = hyp.path_id as usize;
                    let cost = if idx < cover.paths.len() {
                        cover.paths[idx].path.cost
                    } else {
                        cover.stop_paths[idx - cover.paths.len()].1.cost
                    };
                    out.push_str(&format!("PATH {} {}", next_pid, cost));
                    for w in &hyp.words {
                        out.push(' ');
                        out.push_str(w);
                    }
                    out.push('\n');
                    next_pid += 1;
                }
            }
            write_output(&io.output, &out)
        }
        Command::Rescore {
            io,
            scorer,
            strategy,
            beam,
            epsilon,
            lambda1,
            nbest_n,
            posterior_semiring,
            jobs,
        } => {
            let strategy: Strategy = strategy.parse()?;
            let cfg = RescoreConfig {
                strategy,
                epsilon,
                beam,
                estimation: scorer.estimation.parse()?,
                lambda: scorer.lambda,
                lambda1,
                nbest: nbest_n,
                posterior_semiring: posterior_semiring.parse()?,
            };
            cfg.validate()?;
            let backend = make_scorer(&scorer.scorer)?;
            let counting = lattice_rescore::score::CountingScorer::new(backend);
            let entries = archive_pairs(read_archive(&io.input)?);

            let run = |entries: &[(String, Lattice)]| -> Result<String> {
                match strategy {
                    Strategy::NBest => {
                        let picks = nbest_archive(entries, &counting, cfg.nbest, cfg.lambda)?;
                        let mut out = String::new();
                        for (utt, words) in picks {
                            out.push_str(&utt);
                            for w in words {
                                out.push(' ');
                                out.push_str(&w);
                            }
                            out.push('\n');
                        }
                        Ok(out)
                    }
                    _ => {
                        let (rescored, _) = rescore_archive(entries, &counting, &cfg)?;
                        Ok(archive_string(&rescored))
                    }
                }
            };
            let output = if jobs > 0 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                pool.install(|| run(&entries))?
            } else {
                run(&entries)?
            };
            eprintln!(
                "rescore: {} lattice(s), {} scorer call(s), {} hypothesis(es) scored",
                entries.len(),
                counting.calls(),
                counting.hypotheses()
            );
            write_output(&io.output, &output)
        }
        Command::Metrics { io, refs } => {
            let refs = parse_refs(&std::fs::read_to_string(refs)?);
            let entries = archive_pairs(read_archive(&io.input)?);
            let m = compute_metrics(&refs, &entries)?;
            let out = format!(
                "utterances {}\nwer {:.4}\nmean_depth {:.6}\nmean_best_path_loglik {:.6}\n",
                entries.len(),
                m.wer,
                m.lattice_depth,
                m.best_path_loglik
            );
            write_output(&io.output, &out)
        }
        Command::Generate {
            output,
            seed,
            count,
            max_states,
            branching,
            vocab_size,
            cost_noise,
            max_frames,
            lm_fidelity,
            segments,
        } => {
            let profile = GeneratorProfile {
                max_states,
                max_branching: branching,
                vocab_size,
                cost_noise,
                max_frames,
                lm_fidelity,
                segments,
            };
            let entries = generate_archive(seed, count, &profile)?;
            write_output(&output, &archive_string(&entries))
        }
        Command::Bench {
            io,
            scorer,
            beam,
            epsilons,
            orders,
            csv,
            timing,
            posterior_semiring,
        } => {
            let epsilons: Vec<f64> = epsilons
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Config(format!("bad epsilon {s:?}")))
                })
                .collect::<Result<_>>()?;
            let orders: Vec<usize> = orders
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Config(format!("bad order {s:?}")))
                })
                .collect::<Result<_>>()?;
            let cfg = RescoreConfig {
                beam,
                estimation: scorer.estimation.parse()?,
                lambda: scorer.lambda,
                posterior_semiring: posterior_semiring.parse()?,
                ..Default::default()
            };
            let backend = make_scorer(&scorer.scorer)?;
            let entries = archive_pairs(read_archive(&io.input)?);
            let rows = bench_sweep(&entries, &backend, &cfg, &epsilons, &orders, timing)?;

            let mut table = String::new();
            table.push_str(&format!(
                "{:<14} {:<10} {:>8} {:>12} {:>14} {:>14} {:>10} {:>8} {:>8}\n",
                "strategy", "method", "param", "mean_depth", "mean_loglik", "exact_loglik", "hyps", "calls", "wall_ms"
            ));
            for row in &rows {
                table.push_str(&format!(
                    "{:<14} {:<10} {:>8} {:>12.4} {:>14.4} {:>14.4} {:>10} {:>8} {:>8}\n",
                    row.strategy,
                    row.method,
                    row.param,
                    row.mean_depth,
                    row.mean_best_path_loglik,
                    row.mean_exact_loglik,
                    row.hypotheses_scored,
                    row.scorer_calls,
                    row.wall_ms.map_or("-".to_string(), |ms| ms.to_string()),
                ));
            }
            if let Some(csv_path) = csv {
                let mut csv_out = String::from(lattice_rescore::pipeline::BenchRow::csv_header());
                csv_out.push('\n');
                for row in &rows {
                    csv_out.push_str(&row.to_csv());
                    csv_out.push('\n');
                }
                std::fs::write(csv_path, csv_out)?;
            }
            write_output(&io.output, &table)
        }
    }
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
