use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the kernel / weighting / SVM pipeline.
#[derive(Debug, Error)]
pub enum TskError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("record '{record}', line {line}: character '{found}' is not in the {alphabet} alphabet")]
    InvalidSymbol {
        record: String,
        line: usize,
        found: char,
        alphabet: String,
    },

    #[error("record '{0}' has no sequence characters")]
    EmptyRecord(String),

    #[error("duplicate sequence id '{0}'")]
    DuplicateId(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("ids without a matching label: [{}]; labels without a matching sequence: [{}]", missing_labels.join(", "), missing_sequences.join(", "))]
    UnmatchedIds {
        missing_labels: Vec<String>,
        missing_sequences: Vec<String>,
    },

    #[error("invalid label '{value}' for id '{id}' (expected +1 or -1)")]
    InvalidLabel { id: String, value: String },

    #[error("sequence '{id}' has length {length}, shorter than k = {k}")]
    SequenceTooShort { id: String, length: usize, k: usize },

    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sequence '{0}' has a zero self-kernel and cannot be normalized")]
    DegenerateSequence(String),

    #[error("labels contain a single class; both +1 and -1 are required")]
    SingleClass,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown {kind} '{name}' (available: {})", available.join(", "))]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: Vec<String>,
    },

    #[error("solver failure: {message}")]
    Solver {
        message: String,
        last_iterate: Vec<f64>,
        objective_trace: Vec<f64>,
    },

    #[error("conservation score undefined: {0}")]
    Conservation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("all grid cells failed: {0}")]
    GridFailed(String),
}

impl TskError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        TskError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, TskError>;
