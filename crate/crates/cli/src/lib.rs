//! Stage runners behind the `ment` binary.
//!
//! A run writes into a bundle directory. Each stage reads the artifacts of
//! the stage before it, writes its own under a subdirectory named after the
//! stage, and records checksums in `manifest.json`.

use std::io;
use std::path::PathBuf;

pub mod bundle;
pub mod config;
pub mod ingest;
pub mod stages;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ment_core::Error),

    #[error("{0}")]
    Invalid(String),

    #[error("missing {what} ({}); run `ment {stage}` first", path.display())]
    Missing {
        what: String,
        path: PathBuf,
        stage: &'static str,
    },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}
