use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("action component {name} = {value} outside [{lo}, {hi}]")]
    ActionOutOfBounds {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("malformed track: {0}")]
    MalformedTrack(String),
    #[error("track generation failed after {attempts} attempts: {last_reason}")]
    GenerationFailed { attempts: usize, last_reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EnvError> = std::result::Result<T, E>;
