//! External scorer integrations.
//!
//! Wire protocol (line-delimited JSON over the child's stdin/stdout):
//!
//! ```text
//! scorer -> {"ready": true, "vocab_size": N}     on startup
//! client -> {"id": 7, "tokens": ["w1", "w2"]}    one line per hypothesis
//! scorer -> {"id": 7, "costs": [c1, c2, c3]}     nats, includes </s>
//! ```
//!
//! Requests of one batch are written together, then the same number of
//! response lines is read back; responses may arrive in any order and
//! are correlated by id. Closing stdin (dropping the scorer) terminates
//! the child. Batches from concurrent worker threads are serialized on
//! an internal lock.
//!
//! The offline alternative is a score file with one `PID C1 C2 ...` line
//! per hypothesis, keyed by the ids the `to-list` subcommand assigned.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;

use super::{ScoreRequest, ScoreResponse, Scorer};
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
struct Handshake {
    ready: bool,
    #[serde(default)]
    vocab_size: usize,
}

/// Parse one response line of the wire protocol.
pub fn parse_response_line(line: &str) -> Result<ScoreResponse> {
    let resp: ScoreResponse = serde_json::from_str(line.trim())
        .map_err(|e| Error::ScorerProtocol(format!("bad response line: {e}")))?;
    if resp.costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::ScorerProtocol(format!(
            "id {}: non-finite cost in response",
            resp.id
        )));
    }
    Ok(resp)
}

struct ChildIo {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    child: Child,
}

/// Subprocess scorer speaking the line-delimited JSON protocol.
pub struct ExternalScorer {
    command: String,
    vocab_size: usize,
    io: Mutex<ChildIo>,
}

impl ExternalScorer {
    /// Spawn `command` (whitespace-split, no shell) and wait for the
    /// ready handshake.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::ScorerUnavailable("empty scorer command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::ScorerUnavailable(format!("failed to spawn {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));

        let mut line = String::new();
        stdout
            .read_line(&mut line)
            .map_err(|e| Error::ScorerUnavailable(format!("handshake read failed: {e}")))?;
        if line.is_empty() {
            return Err(Error::ScorerUnavailable(
                "scorer exited before handshake".into(),
            ));
        }
        let handshake: Handshake = serde_json::from_str(line.trim())
            .map_err(|e| Error::ScorerProtocol(format!("bad handshake: {e}")))?;
        if !handshake.ready {
            return Err(Error::ScorerUnavailable("scorer reported not ready".into()));
        }
        Ok(ExternalScorer {
            command: command.to_string(),
            vocab_size: handshake.vocab_size,
            io: Mutex::new(ChildIo {
                stdin,
                stdout,
                child,
            }),
        })
    }
}

impl Scorer for ExternalScorer {
    fn kind(&self) -> &str {
        "exec"
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn serialized(&self) -> bool {
        true
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        let mut io = self.io.lock().expect("scorer lock");
        let mut payload = String::new();
        for req in requests {
            payload.push_str(
                &serde_json::to_string(req)
                    .map_err(|e| Error::ScorerProtocol(format!("encode failed: {e}")))?,
            );
            payload.push('\n');
        }
        io.stdin
            .write_all(payload.as_bytes())
            .and_then(|()| io.stdin.flush())
            .map_err(|e| Error::ScorerUnavailable(format!("{}: write failed: {e}", self.command)))?;

        let mut responses = Vec::with_capacity(requests.len());
        let mut line = String::new();
        for _ in 0..requests.len() {
            line.clear();
            let n = io
                .stdout
                .read_line(&mut line)
                .map_err(|e| Error::ScorerUnavailable(format!("read failed: {e}")))?;
            if n == 0 {
                return Err(Error::ScorerUnavailable(format!(
                    "{}: scorer closed its output mid-batch",
                    self.command
                )));
            }
            responses.push(parse_response_line(&line)?);
        }
        Ok(responses)
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

/// Parse an offline score file: one `PID C1 C2 ...` line per hypothesis.
pub fn parse_score_file(text: &str) -> Result<HashMap<u64, Vec<f64>>> {
    let mut table = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let pid: u64 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|_| Error::ScorerProtocol(format!("score file line {}: bad id", i + 1)))?;
        let costs: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|c| c.is_finite())
                    .ok_or_else(|| {
                        Error::ScorerProtocol(format!("score file line {}: bad cost {f:?}", i + 1))
                    })
            })
            .collect::<Result<_>>()?;
        if costs.is_empty() {
            return Err(Error::ScorerProtocol(format!(
                "score file line {}: no costs",
                i + 1
            )));
        }
        if table.insert(pid, costs).is_some() {
            return Err(Error::ScorerProtocol(format!(
                "score file line {}: duplicate id {pid}",
                i + 1
            )));
        }
    }
    Ok(table)
}

/// Scorer backed by a precomputed score file. Hypothesis ids must match
/// the ids `to-list` emitted for the same (identically preprocessed)
/// archive.
#[derive(Debug)]
pub struct FileScorer {
    table: HashMap<u64, Vec<f64>>,
}

impl FileScorer {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Ok(FileScorer {
            table: parse_score_file(&std::fs::read_to_string(path)?)?,
        })
    }

    pub fn from_table(table: HashMap<u64, Vec<f64>>) -> Self {
        FileScorer { table }
    }
}

impl Scorer for FileScorer {
    fn kind(&self) -> &str {
        "scores"
    }

    fn vocab_size(&self) -> usize {
        0
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        requests
            .iter()
            .map(|req| {
                let costs = self.table.get(&req.id).ok_or_else(|| {
                    Error::ScorerProtocol(format!("score file has no entry for id {}", req.id))
                })?;
                Ok(ScoreResponse {
                    id: req.id,
                    costs: costs.clone(),
                })
            })
            .collect()
    }
}
