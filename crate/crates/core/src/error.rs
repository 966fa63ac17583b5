use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("duplicate marker name `{0}`")]
    DuplicateMarker(String),

    #[error("marker map does not match genotype matrix: {0}")]
    MapMismatch(String),

    #[error("marker `{name}` (column {col}) has fewer than two observed states")]
    DegenerateMarker { col: usize, name: String },

    #[error("marker `{name}` (column {col}) has no observations in category {category}")]
    EmptyCategory {
        col: usize,
        name: String,
        category: usize,
    },

    #[error("invalid truncation interval [{lower}, {upper}]")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("chain too short: {len} < {min}")]
    ChainTooShort { len: usize, min: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no converged entry on the regularization path")]
    EmptyPath,
}

pub type Result<T> = std::result::Result<T, Error>;
