//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Syntactic problem in an input file. `source_name` is the file path when
    /// known, `"input"` for in-memory text.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// Structurally well-formed input that violates a documented requirement
    /// (bad node reference, negative demand, mismatched dimensions, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// No route exists between an origin/destination pair. Node ids are the
    /// 1-based ids used in the input files.
    #[error("no path from node {origin} to node {destination}")]
    NoPath { origin: usize, destination: usize },

    /// A gap measure was requested for a flow vector with a zero or negative
    /// component. Solvers keep iterates strictly positive; anything else here
    /// is a caller bug or a hand-built state.
    #[error("path flow {value:e} at index {index} is not strictly positive")]
    NonPositiveFlow { index: usize, value: f64 },

    /// A probe direction or trial point left the nonnegative orthant.
    #[error("infeasible flow vector: {0}")]
    Infeasible(String),

    /// GMRES was handed an all-zero right-hand side.
    #[error("linear solve requested for a zero right-hand side")]
    ZeroRhs,

    /// Refusal to materialize a dense matrix beyond the configured order.
    #[error("dense matrix of order {n} exceeds the limit of {limit}")]
    TooLargeForDense { n: usize, limit: usize },

    /// A path-set statistic is undefined for this input.
    #[error("path-set metric undefined: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
