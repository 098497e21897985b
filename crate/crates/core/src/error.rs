use thiserror::Error;

/// Errors produced by index construction, search, and persistence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero vector cannot be normalized")]
    ZeroVector,

    #[error("non-finite coordinate (NaN or infinity)")]
    NonFinite,

    #[error("column {0:?} has no vectors")]
    EmptyColumn(String),

    #[error("duplicate column id {0:?}")]
    DuplicateColumnId(String),

    #[error("repository contains no vectors")]
    EmptyRepository,

    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown metric {0:?}")]
    UnknownMetric(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("index file error: {0}")]
    IndexFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
