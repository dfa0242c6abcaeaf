use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::llm::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("memory error: {0}")]
    Memory(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("backend error in round {round}: {source}")]
    Backend {
        round: u32,
        #[source]
        source: BackendError,
        /// Checkpoint left behind for `resume`, if one could be written.
        checkpoint: Option<PathBuf>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
