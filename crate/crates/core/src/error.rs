use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input at action {index}: {reason}")]
    MalformedInput { index: usize, reason: String },

    #[error("invalid episode: {0}")]
    InvalidEpisode(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown player {0}")]
    UnknownPlayer(u32),

    #[error("grammar violation at position {position}: {reason}")]
    Grammar { position: usize, reason: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate batch: no loss positions selected")]
    DegenerateBatch,

    #[error("vocabulary mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("context overflow: {needed} tokens exceed block size {block_size}")]
    ContextOverflow { needed: usize, block_size: usize },

    #[error("substitution error: {0}")]
    Substitution(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
