use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: missing value in column {column}")]
    MissingValue { line: usize, column: usize },

    #[error("variable {0} out of range")]
    VariableOutOfRange(usize),

    #[error("target variable {0} is contained in its own parent set")]
    TargetInParents(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parent configuration space overflows for variable {0}")]
    ConfigOverflow(usize),

    #[error("score cache has no pairwise statistics; rebuild it from data")]
    MissingStatistics,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("graph contains a directed cycle through {0:?}")]
    Cycle(Vec<usize>),

    #[error("k-tree error: {0}")]
    KTree(String),

    #[error("{n} variables exceed the exact solver cap of {cap}")]
    TooManyVariables { n: usize, cap: usize },

    #[error("W-score requires negative scores, got G={reference}, T={score}")]
    NonNegativeScore { reference: f64, score: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
