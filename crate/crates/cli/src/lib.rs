//! Command-line driver for the blockbayes pipeline.

pub mod commands;
pub mod config;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::PipelineConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: blockbayes::Error },
    #[error("no images found under {}", .0.display())]
    NoImages(PathBuf),
    #[error(transparent)]
    Pipeline(#[from] blockbayes::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}
