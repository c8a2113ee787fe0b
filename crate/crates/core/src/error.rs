use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown {kind} `{name}` at {path}:{line}")]
    Vocabulary {
        kind: &'static str,
        name: String,
        path: PathBuf,
        line: usize,
    },

    #[error("id out of range: {0}")]
    IdOutOfRange(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("layout mismatch: ({0}, {1}) vs ({2}, {3})")]
    LayoutMismatch(usize, usize, usize, usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),

    #[error("head truth is undefined when the body truth product is zero")]
    UndefinedHead,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
