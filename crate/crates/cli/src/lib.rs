//! Configuration-driven sweeps over tri-hybrid precoders and baselines.

pub mod audit;
pub mod config;
pub mod experiment;
pub mod plot;

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] trihybrid::Error),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    /// Process exit code: 2 for bad input, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Schema(_) => 2,
            _ => 1,
        }
    }
}
