use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GscadError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Every atom was pruned away.
    #[error("dictionary is empty after pruning")]
    EmptyDictionary,

    #[error("image {height}x{width} is smaller than the {patch}x{patch} patch")]
    ImageTooSmall {
        height: usize,
        width: usize,
        patch: usize,
    },

    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),

    #[error("unsupported PGM maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("malformed CSV: {0}")]
    MalformedCsv(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GscadError>;
