use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document `{doc_id}` in topic `{topic_id}`")]
    DuplicateDocument { topic_id: String, doc_id: String },

    #[error("topic `{0}` has no documents")]
    EmptyTopic(String),

    #[error("topic `{0}` has no relevant documents")]
    NoRelevant(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("batch count mismatch: expected {expected}, found {found}")]
    BatchMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("classifier training data contains a single class")]
    DegenerateTraining,

    #[error("episode is already finished")]
    EpisodeFinished,

    #[error("episode has not finished")]
    EpisodeRunning,

    #[error("environment has not been reset")]
    NotReset,

    #[error("training diverged at rollout {rollout}: {message}")]
    Diverged { rollout: usize, message: String },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
