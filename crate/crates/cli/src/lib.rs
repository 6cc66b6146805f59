//! Experiment drivers for the rotor-chain library: TOML configuration,
//! parameter scans and artifact output.

use std::path::PathBuf;

pub mod config;
pub mod experiments;
pub mod manifest;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::run;
pub use manifest::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Every problem found in the configuration, one message each.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
    #[error("{0}")]
    Run(String),
}

impl From<qrotor::Error> for CliError {
    fn from(e: qrotor::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl CliError {
    /// Process exit code: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
