//! File-level driver for the `dailypnl` engine: loading inputs, running the
//! per-ledger pipeline on a worker pool, and writing canonical outputs.

pub mod commands;
pub mod config;
pub mod groups;
pub mod output;
pub mod pipeline;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or flag combinations.
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Input files that exist but cannot be used.
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Input(_) => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
