//! Line-oriented lattice text format.
//!
//! ```text
//! UTT <id>                                   # optional header naming the lattice
//! SRC DST WORD GRAPH_COST,ACOUSTIC_COST[,NUM_FRAMES]
//! ...
//! STATE FINAL_COST
//! ```
//!
//! `#` starts a comment (whole line or trailing). A blank line separates
//! lattices in a multi-lattice archive. The start state is the source
//! state of the first arc line (or the state of the first final line for
//! an arc-less lattice). `NUM_FRAMES` defaults to 1; 0 frames are only
//! allowed on structural (`<s>`, `</s>`) arcs. `<eps>` arcs are rejected:
//! input lattices are assumed epsilon-free and determinized.
//!
//! Serialization is canonical — states in topological order, arcs sorted
//! by word, costs printed with the shortest round-tripping decimal — so
//! parse ∘ serialize is the identity on the text.

use std::collections::HashMap;
use std::io::Write;

use super::{Lattice, LatticeBuilder, StateId, Trimmed, BOS, EOS, EPS};
use crate::{Error, Result};

/// One lattice of an archive, with its utterance id and the number of
/// states dropped by trimming (worth a warning when nonzero).
#[derive(Debug)]
pub struct ArchiveEntry {
    pub utt: String,
    pub lattice: Lattice,
    pub trimmed_states: usize,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

struct Block {
    utt: Option<String>,
    first_line: usize,
    /// (line, src, dst, word, graph, acoustic, frames)
    arcs: Vec<(usize, u32, u32, String, f64, f64, u32)>,
    /// (line, state, cost)
    finals: Vec<(usize, u32, f64)>,
}

impl Block {
    fn is_empty(&self) -> bool {
        self.utt.is_none() && self.arcs.is_empty() && self.finals.is_empty()
    }
}

fn parse_cost(line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} {field:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} must be finite, got {field:?}")));
    }
    Ok(v)
}

fn parse_state(line: usize, field: &str, what: &str) -> Result<u32> {
    field
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} {field:?}")))
}

/// Parse a multi-lattice archive. Returns one entry per lattice block.
pub fn parse_archive(text: &str) -> Result<Vec<ArchiveEntry>> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut current = Block {
        utt: None,
        first_line: 0,
        arcs: Vec::new(),
        finals: Vec::new(),
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            if raw.trim().is_empty() && !current.is_empty() {
                blocks.push(std::mem::replace(
                    &mut current,
                    Block {
                        utt: None,
                        first_line: 0,
                        arcs: Vec::new(),
                        finals: Vec::new(),
                    },
                ));
            }
            continue;
        }
        if current.is_empty() {
            current.first_line = lineno;
        }

        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.len() {
            2 if fields[0] == "UTT" => {
                if current.utt.is_some() || !current.arcs.is_empty() || !current.finals.is_empty()
                {
                    return Err(parse_err(lineno, "UTT header must open a lattice block"));
                }
                current.utt = Some(fields[1].to_string());
            }
            2 => {
                let state = parse_state(lineno, fields[0], "final state")?;
                let cost = parse_cost(lineno, fields[1], "final cost")?;
                current.finals.push((lineno, state, cost));
            }
            4 => {
                let src = parse_state(lineno, fields[0], "source state")?;
                let dst = parse_state(lineno, fields[1], "destination state")?;
                let word = fields[2];
                if word == EPS {
                    return Err(parse_err(lineno, "epsilon arcs are not allowed"));
                }
                let costs: Vec<&str> = fields[3].split(',').collect();
                if costs.len() < 2 || costs.len() > 3 {
                    return Err(parse_err(
                        lineno,
                        "expected GRAPH_COST,ACOUSTIC_COST[,NUM_FRAMES]",
                    ));
                }
                let graph = parse_cost(lineno, costs[0], "graph cost")?;
                let acoustic = parse_cost(lineno, costs[1], "acoustic cost")?;
                let frames: u32 = match costs.get(2) {
                    Some(f) => f
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("invalid frame count {f:?}")))?,
                    None => 1,
                };
                if frames == 0 && word != BOS && word != EOS {
                    return Err(parse_err(
                        lineno,
                        "zero-frame arcs are only allowed for structural tokens",
                    ));
                }
                current
                    .arcs
                    .push((lineno, src, dst, word.to_string(), graph, acoustic, frames));
            }
            _ => {
                return Err(parse_err(
                    lineno,
                    format!("expected an arc, final, or UTT line, got {line:?}"),
                ));
            }
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }

    let mut entries = Vec::with_capacity(blocks.len());
    for (idx, block) in blocks.into_iter().enumerate() {
        let utt = block
            .utt
            .clone()
            .unwrap_or_else(|| format!("utt{idx}"));
        let trimmed = build_block(block)?;
        entries.push(ArchiveEntry {
            utt,
            lattice: trimmed.lattice,
            trimmed_states: trimmed.trimmed_states,
        });
    }
    Ok(entries)
}

fn build_block(block: Block) -> Result<Trimmed> {
    let start = block
        .arcs
        .first()
        .map(|&(_, src, ..)| src)
        .or_else(|| block.finals.first().map(|&(_, s, _)| s))
        .ok_or_else(|| parse_err(block.first_line.max(1), "lattice block has no start state"))?;

    // Input state ids may be sparse; remap densely with the start at 0.
    let mut remap: HashMap<u32, StateId> = HashMap::new();
    let mut builder = LatticeBuilder::new();
    let map = |builder: &mut LatticeBuilder, remap: &mut HashMap<u32, StateId>, s: u32| {
        *remap.entry(s).or_insert_with(|| builder.add_state())
    };
    map(&mut builder, &mut remap, start);

    for (_, src, dst, word, graph, acoustic, frames) in &block.arcs {
        let s = map(&mut builder, &mut remap, *src);
        let t = map(&mut builder, &mut remap, *dst);
        let w = builder.intern(word);
        builder.add_arc(s, w, *graph, *acoustic, *frames, t);
    }
    let mut seen_finals: HashMap<u32, ()> = HashMap::new();
    for (lineno, state, cost) in &block.finals {
        if seen_finals.insert(*state, ()).is_some() {
            return Err(parse_err(*lineno, format!("duplicate final line for state {state}")));
        }
        let s = map(&mut builder, &mut remap, *state);
        builder.set_final(s, *cost);
    }
    builder.finish()
}

/// Parse a document that must contain exactly one lattice.
pub fn parse_lattice(text: &str) -> Result<Lattice> {
    let mut entries = parse_archive(text)?;
    match entries.len() {
        0 => Err(parse_err(1, "empty document (no start state)")),
        1 => Ok(entries.pop().unwrap().lattice),
        n => Err(parse_err(1, format!("expected one lattice, found {n}"))),
    }
}

/// Canonical text for one lattice.
pub fn lattice_to_string(utt: &str, lat: &Lattice) -> String {
    let mut out = String::new();
    out.push_str(&format!("UTT {utt}\n"));
    for s in lat.states() {
        for arc in lat.out(s) {
            out.push_str(&format!(
                "{} {} {} {},{},{}\n",
                s,
                arc.next_state,
                lat.word_name(arc.word),
                arc.graph_cost,
                arc.acoustic_cost,
                arc.num_frames
            ));
        }
    }
    for (s, cost) in lat.finals() {
        out.push_str(&format!("{s} {cost}\n"));
    }
    out
}

/// Write an archive: blocks separated by blank lines.
pub fn write_archive<W: Write>(w: &mut W, entries: &[(String, Lattice)]) -> Result<()> {
    for (i, (utt, lat)) in entries.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        w.write_all(lattice_to_string(utt, lat).as_bytes())?;
    }
    Ok(())
}
