use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
    #[error("missing checkpoint at {}", .0.display())]
    MissingCheckpoint(PathBuf),
    #[error("run directory {} already holds a finished run", .0.display())]
    RunExists(PathBuf),
    #[error("malformed artifact {}: {reason}", path.display())]
    Artifact { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] cheq_core::CoreError),
    #[error(transparent)]
    Env(#[from] cheq_env::EnvError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// The JSON object printed on stderr when the CLI fails.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidConfig(_) | Self::SchemaVersion { .. } | Self::UnknownProfile(_) => "invalid_config",
            Self::MissingCheckpoint(_) => "missing_checkpoint",
            Self::RunExists(_) => "run_exists",
            Self::Artifact { .. } => "artifact",
            Self::File { .. } | Self::Io(_) => "io",
            Self::Json(_) => "json",
            Self::Core(cheq_core::CoreError::InvalidConfig(_)) => "invalid_config",
            Self::Core(cheq_core::CoreError::Checkpoint(_)) => "checkpoint",
            Self::Core(cheq_core::CoreError::NonFinite { .. }) => "non_finite",
            Self::Core(_) => "core",
            Self::Env(_) => "env",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            kind: self.kind(),
            message: self.to_string(),
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::File {
        path: path.to_path_buf(),
        source,
    })
}
