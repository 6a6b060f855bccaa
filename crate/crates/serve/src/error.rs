use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("session `{0}` has ended")]
    SessionEnded(String),
    #[error(transparent)]
    Core(#[from] searchassist_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ServeError> = std::result::Result<T, E>;
