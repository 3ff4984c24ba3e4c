//! Configuration-driven experiments on top of `nucpol-core`: single runs,
//! parameter sweeps, amplitude spectra and cluster archives, emitted as CSV
//! and JSON with provenance.

pub mod commands;
pub mod config;
pub mod output;
pub mod plan;
pub mod presets;
pub mod stats;
pub mod units;

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical health error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// A failure reported after artifacts were written.
    #[error("{source}")]
    WithArtifacts {
        #[source]
        source: Box<CliError>,
        paths: Vec<PathBuf>,
    },
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn with_paths(self, paths: Vec<PathBuf>) -> Self {
        CliError::WithArtifacts { source: Box::new(self), paths }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
            CliError::WithArtifacts { source, .. } => source.exit_code(),
        }
    }
}
