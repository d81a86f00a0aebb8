//! Command implementations behind the `hip` binary: dataset generation,
//! training, evaluation, the guidance sweep, oracle checks and checkpoint
//! inspection.

pub mod commands;
pub mod config;
pub mod io;

pub use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("missing dataset: {0}")]
    MissingDataset(String),
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Runtime(String),
    #[error("oracle checks failed: {0}")]
    OracleFailed(String),
}

impl CliError {
    /// 1 for bad input, 2 for failures while running, 3 for failed oracle checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::OracleFailed(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}
