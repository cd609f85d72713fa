use thiserror::Error;

/// Errors raised by the optimization toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrnasError {
    #[error("point is outside the cone interior: coordinate {index} = {value}")]
    Domain { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("fully determined feasible set: equality constraints have rank {rank} = n")]
    FullyDetermined { rank: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CrnasError {
    fn from(e: std::io::Error) -> Self {
        CrnasError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CrnasError {
    fn from(e: serde_json::Error) -> Self {
        CrnasError::Io(e.to_string())
    }
}

impl From<csv::Error> for CrnasError {
    fn from(e: csv::Error) -> Self {
        CrnasError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CrnasError>;
