//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide error enum. Variants map onto the CLI exit codes:
/// config/parse problems exit 2, numeric divergence exits 3, and
/// infeasible bound requests exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("empty population: aggregation weights need at least one sample")]
    EmptyPopulation,

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("numeric divergence at round {round}, step {step}")]
    Divergence { round: usize, step: String },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid bound: {0}")]
    InvalidBound(String),

    #[error("infeasible bound request: {0}")]
    InfeasibleBound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) => 2,
            Error::NonFinite(_) | Error::Divergence { .. } => 3,
            Error::InfeasibleBound(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
