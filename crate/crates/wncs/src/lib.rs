//! Standard-library companion to `wncs-core`: experiment configuration,
//! file formats, the experiment pipeline and the `wncs` CLI.

use std::path::PathBuf;

pub mod cli;
pub mod config;
pub mod formats;
pub mod pipeline;

pub use cli::cli_main;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Core(#[from] wncs_core::Error),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::MissingArtifact(_) => 2,
            _ => 1,
        }
    }
}
