use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("checksum mismatch for {}", .0.display())]
    Checksum(PathBuf),
    #[error("missing series files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Missing(Vec<PathBuf>),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Core(#[from] chaoslab::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 2 for bad input, 3 for numerical blow-up, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Checksum(_) | CliError::Missing(_) | CliError::Manifest(_) => 2,
            CliError::Core(chaoslab::Error::BlowUp { .. } | chaoslab::Error::StepSize { .. }) => 3,
            CliError::Core(chaoslab::Error::Domain(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
