//! Pipeline driver behind the `ambisense` binary.
//!
//! Each subcommand reads its inputs from, and writes its artifacts to, the
//! run's output directory, so commands can be run one at a time or chained
//! with `run-all`.

pub mod commands;
pub mod config;

pub use config::RunConfig;

use std::path::PathBuf;

use ambisense::{BuildError, DatasetError, QuantError, SimError, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: missing; run `ambisense {command}` first", path.display())]
    MissingArtifact { path: PathBuf, command: &'static str },
    #[error("{}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
}

impl CliError {
    /// Process exit status for each failure category.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Train(_) => 5,
            CliError::Build(_) | CliError::Quant(_) | CliError::Sim(_) => 6,
            CliError::Io { .. } | CliError::MissingArtifact { .. } | CliError::Artifact { .. } => 7,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
