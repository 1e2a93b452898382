//! Library side of the `ghost-tracker` binary: config loading, artifact
//! writing and verification, and the four run modes.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::PathBuf;

pub use commands::{cmd_background, cmd_eval, cmd_sweep, cmd_track, run, Outcome};
pub use config::{LoadedConfig, Mode, Overrides, RunConfig};

pub const TOOL_VERSION: &str = concat!("ghost-tracker ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] ghost_core::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
