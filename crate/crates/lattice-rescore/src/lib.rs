//! Word-lattice rescoring toolkit.
//!
//! A lattice is a weighted directed acyclic word graph produced by a
//! first-pass speech decoder: one start state, final costs on end states,
//! and arcs labeled with words and (graph, acoustic) costs in nats. This
//! crate provides the machinery to rescore such lattices with a stronger
//! language model while keeping LM evaluation batched:
//!
//! - [`lattice`]: the data model, a line-oriented text format, beam
//!   pruning, and exhaustive path enumeration (the test oracle).
//! - [`viterbi`]: forward-backward over max/sum semirings, best paths,
//!   and arc posteriors.
//! - [`expand`]: posterior-threshold lattice expansion plus the n-gram
//!   history-merging baseline.
//! - [`cover`]: conversion of a lattice into a constrained path cover —
//!   a short list of hypotheses that touches every arc, each hypothesis
//!   being the best path through at least one of its arcs.
//! - [`score`]: the pluggable scorer interface (built-in scorers, an
//!   external subprocess protocol, offline score files), per-arc score
//!   estimation, and interpolation back into the lattice.
//! - [`pipeline`]: end-to-end rescoring strategies, metrics, a synthetic
//!   lattice generator, and the benchmark sweep used by the CLI.

pub mod cover;
pub mod expand;
pub mod lattice;
pub mod pipeline;
pub mod score;
pub mod viterbi;

pub use lattice::{Arc, ArcId, Lattice, LatticeBuilder, Path, StateId, SymbolTable, WordId};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed lattice text, reported with a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The lattice graph contains a cycle reachable from the start state.
    #[error("lattice contains a cycle")]
    Cycle,

    /// A state has two outgoing arcs with the same word label.
    #[error("nondeterministic lattice: state {state} has duplicate outgoing word {word:?}")]
    Nondeterminism { state: u32, word: String },

    /// Trimming removed everything: no path from the start to a final state.
    #[error("lattice has no complete path from start to a final state")]
    NoCompletePath,

    /// Path enumeration found more complete paths than the caller allowed.
    #[error("lattice has more than {limit} paths")]
    TooManyPaths { limit: usize },

    /// Invalid parameter (threshold out of range, bad n-gram order, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The external scorer answered, but not in the expected shape.
    #[error("scorer protocol error: {0}")]
    ScorerProtocol(String),

    /// The external scorer could not be started or went away.
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),

    /// An arc has no score candidate from any covering hypothesis.
    #[error("arc {arc} is not covered by any scored hypothesis")]
    UncoveredArc { arc: u32 },

    /// Metrics were requested for an utterance without a reference.
    #[error("missing reference for utterance {0:?}")]
    MissingReference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: scorer protocol failures are
    /// distinguished from ordinary validation errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ScorerProtocol(_) | Error::ScorerUnavailable(_) => 2,
            _ => 1,
        }
    }
}
