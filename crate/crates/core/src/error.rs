use std::path::PathBuf;

use crate::model::ValidationReport;
use crate::solver::InfeasibleReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    InvalidSpec(String),

    #[error("value {value} out of range: {message}")]
    Range { value: u64, message: String },

    #[error("mapping is infeasible: {0}")]
    InvalidMapping(ValidationReport),

    #[error("no feasible mapping: {0}")]
    Infeasible(InfeasibleReport),

    #[error("oracle scale exceeded: {steps} steps > limit {limit}")]
    OracleScale { steps: u128, limit: u128 },

    #[error("mapping space of {size} candidates exceeds limit {limit}")]
    SpaceTooLarge { size: u128, limit: u128 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
