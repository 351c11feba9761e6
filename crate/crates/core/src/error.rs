use std::path::PathBuf;

/// Errors produced by the array synthesis and analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("invalid array specification: {0}")]
    InvalidSpec(String),

    #[error("element {index} at ({x:.6}, {y:.6}) m lies outside the surface domain")]
    OutOfDomain { index: usize, x: f64, y: f64 },

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid sphere grid: {0}")]
    InvalidGrid(String),

    #[error("invalid excitation: {0}")]
    InvalidExcitation(String),

    #[error("zero radiated power")]
    ZeroPower,

    #[error("empty range: {0}")]
    EmptyRange(String),

    #[error("degenerate optimization problem: {0}")]
    Degenerate(String),

    #[error("infeasible at SLL bound {bound}: {constraint}")]
    Infeasible { bound: f64, constraint: String },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
