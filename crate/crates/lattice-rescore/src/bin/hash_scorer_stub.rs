//! Reference external scorer speaking the line-delimited JSON protocol.
//!
//! Prints a ready handshake, then answers each `{"id", "tokens"}` request
//! line with `{"id", "costs"}` using the in-process hash scorer, so wire
//! and in-process rescoring results are bit-identical. Exits on EOF.

use std::io::{BufRead, Write};

use lattice_rescore::score::{HashScorer, ScoreRequest, ScoreResponse};

fn main() {
    let scorer = HashScorer::default();
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();

    // vocab_size 0: open vocabulary.
    writeln!(out, "{{\"ready\": true, \"vocab_size\": 0}}").expect("handshake write");
    out.flush().expect("handshake flush");

    for line in stdin.lock().lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                eprintln!("hash-scorer-stub: read error: {e}");
                std::process::exit(2);
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let req: ScoreRequest = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("hash-scorer-stub: bad request line: {e}");
                std::process::exit(2);
            }
        };
        let resp = ScoreResponse {
            id: req.id,
            costs: scorer.sequence_costs(&req.tokens),
        };
        serde_json::to_writer(&mut out, &resp).expect("response write");
        out.write_all(b"\n").expect("response write");
        out.flush().expect("response flush");
    }
}
