use thiserror::Error;

use crate::contraction::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("extent must be at least 1, got {0}")]
    ZeroExtent(usize),

    #[error("tensor has {extents} extents but {strides} strides")]
    RankMismatch { extents: usize, strides: usize },

    #[error("tensor layout does not fit its storage: {0}")]
    InvalidLayout(String),

    #[error("index {index:?} out of range for extents {extents:?}")]
    IndexOutOfRange { index: Vec<usize>, extents: Vec<usize> },

    #[error("extent mismatch: {0:?} vs {1:?}")]
    ExtentMismatch(Vec<usize>, Vec<usize>),

    #[error("bundle mismatch: {0}")]
    Bundle(String),

    #[error("invalid range {start}..{end} for dimension {len}")]
    InvalidRange { start: usize, end: usize, len: usize },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("invalid blocking parameters: {0}")]
    Blocking(String),

    #[error("Strassen level {level} exceeds the configured maximum of {max}")]
    LevelTooDeep { level: usize, max: usize },

    #[error("elapsed time must be positive, got {0}")]
    NonPositiveTime(f64),
}
