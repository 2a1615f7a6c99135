//! End-to-end CLI behavior: stage composition over files, the offline
//! score-file flow, warnings, and output formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use lattice_rescore::lattice::parse_archive;
use lattice_rescore::score::HashScorer;

struct Cli {
    bin: &'static str,
    dir: PathBuf,
}

impl Cli {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("lattice-rescore-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Cli {
            bin: env!("CARGO_BIN_EXE_lattice-rescore"),
            dir,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn run(&self, args: &[&str]) -> (String, String, i32) {
        let out = Command::new(self.bin)
            .args(args)
            .stdin(Stdio::null())
            .output()
            .unwrap();
        (
            String::from_utf8(out.stdout).unwrap(),
            String::from_utf8(out.stderr).unwrap(),
            out.status.code().unwrap_or(-1),
        )
    }

    fn run_ok(&self, args: &[&str]) -> String {
        let (out, err, code) = self.run(args);
        assert_eq!(code, 0, "{args:?} failed: {err}");
        out
    }
}

impl Drop for Cli {
    fn drop(&mut self) {
        std::fs::remove_dir_all(&self.dir).ok();
    }
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

#[test]
fn stages_compose_through_files() {
    let cli = Cli::new("compose");
    let archive = cli.path("archive.txt");
    let gen = cli.run_ok(&["generate", "--seed", "5", "--count", "6", "--max-states", "20"]);
    write(&archive, &gen);

    let pruned = cli.run_ok(&["prune", archive.to_str().unwrap(), "--beam", "6"]);
    let pruned_path = cli.path("pruned.txt");
    write(&pruned_path, &pruned);

    let expanded = cli.run_ok(&["expand", pruned_path.to_str().unwrap(), "--epsilon", "0.4"]);
    let expanded_path = cli.path("expanded.txt");
    write(&expanded_path, &expanded);

    let listing = cli.run_ok(&["to-list", expanded_path.to_str().unwrap()]);
    assert!(listing.lines().any(|l| l.starts_with("UTT ")));
    assert!(listing.lines().any(|l| l.starts_with("PATH ")));

    // Posteriors output stays parseable lattice text.
    let posted = cli.run_ok(&["posteriors", expanded_path.to_str().unwrap()]);
    let entries = parse_archive(&posted).unwrap();
    assert_eq!(entries.len(), 6);
    assert!(posted.contains("# post="));
}

#[test]
fn offline_score_file_matches_in_process() {
    let cli = Cli::new("offline");
    let archive = cli.path("archive.txt");
    let gen = cli.run_ok(&["generate", "--seed", "21", "--count", "8", "--max-states", "18"]);
    write(&archive, &gen);

    // Pre-prune so the rescore pass's beam is a no-op on the same input.
    let pruned = cli.run_ok(&["prune", archive.to_str().unwrap(), "--beam", "8"]);
    let pruned_path = cli.path("pruned.txt");
    write(&pruned_path, &pruned);

    // Expand exactly the way non-iterative rescoring will internally.
    let expanded = cli.run_ok(&["expand", pruned_path.to_str().unwrap(), "--epsilon", "0.5"]);
    let expanded_path = cli.path("expanded.txt");
    write(&expanded_path, &expanded);

    let listing = cli.run_ok(&["to-list", expanded_path.to_str().unwrap()]);

    // Stand in for the external batch scorer: score every PATH line
    // offline and emit `PID C1 C2 ...`.
    let scorer = HashScorer::default();
    let mut scores = String::new();
    for line in listing.lines() {
        let mut fields = line.split_whitespace();
        if fields.next() != Some("PATH") {
            continue;
        }
        let pid = fields.next().unwrap();
        let _cost = fields.next().unwrap();
        let words: Vec<String> = fields.map(|w| w.to_string()).collect();
        scores.push_str(pid);
        for c in scorer.sequence_costs(&words) {
            scores.push(' ');
            scores.push_str(&c.to_string());
        }
        scores.push('\n');
    }
    let scores_path = cli.path("scores.txt");
    write(&scores_path, &scores);

    // Non-iterative rescoring from the score file equals in-process.
    let from_file = cli.run_ok(&[
        "rescore",
        pruned_path.to_str().unwrap(),
        "--scorer",
        &format!("scores:{}", scores_path.display()),
        "--beam",
        "8",
        "--epsilon",
        "0.5",
    ]);
    let in_process = cli.run_ok(&[
        "rescore",
        pruned_path.to_str().unwrap(),
        "--scorer",
        "hash",
        "--beam",
        "8",
        "--epsilon",
        "0.5",
    ]);
    assert_eq!(from_file, in_process);

    // The replace strategy consumes a listing of the unexpanded archive.
    let listing = cli.run_ok(&["to-list", pruned_path.to_str().unwrap()]);
    let mut scores = String::new();
    for line in listing.lines() {
        let mut fields = line.split_whitespace();
        if fields.next() != Some("PATH") {
            continue;
        }
        let pid = fields.next().unwrap();
        let _cost = fields.next().unwrap();
        let words: Vec<String> = fields.map(|w| w.to_string()).collect();
        scores.push_str(pid);
        for c in scorer.sequence_costs(&words) {
            scores.push(' ');
            scores.push_str(&c.to_string());
        }
        scores.push('\n');
    }
    write(&scores_path, &scores);
    let from_file = cli.run_ok(&[
        "rescore",
        pruned_path.to_str().unwrap(),
        "--strategy",
        "replace",
        "--scorer",
        &format!("scores:{}", scores_path.display()),
        "--beam",
        "8",
    ]);
    let in_process = cli.run_ok(&[
        "rescore",
        pruned_path.to_str().unwrap(),
        "--strategy",
        "replace",
        "--scorer",
        "hash",
        "--beam",
        "8",
    ]);
    assert_eq!(from_file, in_process);
}

#[test]
fn unreachable_states_warn_on_stderr() {
    let cli = Cli::new("warn");
    let archive = cli.path("dangling.txt");
    write(&archive, "0 1 x 0.5,0.0\n5 6 y 0.5,0.0\n1 0.0\n");
    let (out, err, code) = cli.run(&["prune", archive.to_str().unwrap(), "--beam", "10"]);
    assert_eq!(code, 0);
    assert!(err.contains("warning") && err.contains("unreachable"), "stderr: {err}");
    assert!(out.contains("0 1 x"));
}

#[test]
fn rescore_reports_batch_accounting() {
    let cli = Cli::new("account");
    let archive = cli.path("archive.txt");
    let gen = cli.run_ok(&["generate", "--seed", "9", "--count", "4"]);
    write(&archive, &gen);
    let (_, err, code) = cli.run(&["rescore", archive.to_str().unwrap(), "--scorer", "hash"]);
    assert_eq!(code, 0);
    assert!(err.contains("4 lattice(s), 4 scorer call(s)"), "stderr: {err}");
    let (_, err, _) = cli.run(&[
        "rescore",
        archive.to_str().unwrap(),
        "--scorer",
        "hash",
        "--strategy",
        "iterative",
    ]);
    assert!(err.contains("8 scorer call(s)"), "stderr: {err}");
}

#[test]
fn jobs_flag_keeps_output_deterministic() {
    let cli = Cli::new("jobs");
    let archive = cli.path("archive.txt");
    let gen = cli.run_ok(&["generate", "--seed", "31", "--count", "10"]);
    write(&archive, &gen);
    let one = cli.run_ok(&["rescore", archive.to_str().unwrap(), "--scorer", "hash", "--jobs", "1"]);
    let four = cli.run_ok(&["rescore", archive.to_str().unwrap(), "--scorer", "hash", "--jobs", "4"]);
    assert_eq!(one, four);
}

#[test]
fn nbest_strategy_emits_hypothesis_lines() {
    let cli = Cli::new("nbest");
    let archive = cli.path("archive.txt");
    let gen = cli.run_ok(&["generate", "--seed", "13", "--count", "3"]);
    write(&archive, &gen);
    let out = cli.run_ok(&[
        "rescore",
        archive.to_str().unwrap(),
        "--strategy",
        "nbest",
        "--scorer",
        "hash",
        "--nbest-n",
        "4",
    ]);
    let entries = parse_archive(&gen).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), entries.len());
    for (line, e) in lines.iter().zip(entries.iter()) {
        assert!(line.starts_with(&e.utt));
    }
}

#[test]
fn bench_writes_csv() {
    let cli = Cli::new("bench");
    let archive = cli.path("archive.txt");
    let csv = cli.path("rows.csv");
    let gen = cli.run_ok(&["generate", "--seed", "17", "--count", "5"]);
    write(&archive, &gen);
    let table = cli.run_ok(&[
        "bench",
        archive.to_str().unwrap(),
        "--scorer",
        "hash",
        "--epsilons",
        "0.5,0.05",
        "--orders",
        "2,3",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(table.contains("strategy"));
    assert!(table.contains("posterior"));
    assert!(table.contains("ngram"));
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(csv_text.lines().count(), 5);
    assert!(csv_text.starts_with("strategy,method,param,mean_depth"));
}

#[test]
fn metrics_output_shape() {
    let cli = Cli::new("metrics");
    let archive = cli.path("archive.txt");
    write(&archive, "UTT u1\n0 1 a 0.5,0.0\n1 2 b 0.5,0.0\n2 0.0\n");
    let refs = cli.path("refs.txt");
    write(&refs, "u1 a b\n");
    let out = cli.run_ok(&["metrics", archive.to_str().unwrap(), "--refs", refs.to_str().unwrap()]);
    assert!(out.contains("wer 0.0000"), "{out}");
    assert!(out.contains("mean_depth 1.0"), "{out}");
    let refs_bad = cli.path("refs2.txt");
    write(&refs_bad, "other a b\n");
    let (_, err, code) = cli.run(&["metrics", archive.to_str().unwrap(), "--refs", refs_bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("missing reference"), "{err}");
}
