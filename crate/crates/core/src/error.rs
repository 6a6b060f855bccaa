use thiserror::Error;

use crate::domain::UserAction;

#[derive(Debug, Error)]
pub enum Error {
    #[error("history of {len} entries exceeds the limit of {max}")]
    HistoryTooLong { len: usize, max: usize },
    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("expected {expected} scores, got {got}")]
    ScoreCount { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("duplicate asset id `{0}`")]
    DuplicateAsset(String),
    #[error("asset `{0}` has no tags")]
    EmptyTags(String),
    #[error("asset id is empty")]
    EmptyAssetId,
    #[error("query is empty")]
    EmptyQuery,
    #[error("unknown interaction `{0}`")]
    UnknownInteraction(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("no sessions in input")]
    NoSessions,
    #[error("conditional table is empty")]
    EmptyTable,
    #[error("distribution has no mass after adjustment")]
    DegenerateDistribution,
    #[error("episode already finished")]
    EpisodeDone,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("cannot sample {0:?} without a search context")]
    MissingContext(UserAction),
    #[error("malformed record on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid table key `{0}`")]
    BadKey(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
