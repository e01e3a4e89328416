use std::path::PathBuf;

use crate::poly::Target;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty trace")]
    EmptyTrace,

    #[error("empty window")]
    EmptyWindow,

    #[error("invalid synthetic profile: {0}")]
    InvalidProfile(String),

    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("reference run has zero {0}; gains are undefined")]
    ZeroReference(&'static str),

    #[error("singular normal equations ({0}); retry with ridge > 0")]
    Singular(String),

    #[error("feature vector has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite gradient from the {0} model")]
    NonFiniteGradient(Target),

    #[error("model file: {0}")]
    Model(String),

    #[error("{path}:{line}: {message}")]
    ConfigFile {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown trace or profile `{0}`")]
    UnknownTrace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
