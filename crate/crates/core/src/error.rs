use thiserror::Error;

use crate::segmenter::framing::FrameError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: u8, class_count: usize },

    #[error("mask has no set pixels")]
    EmptyMask,

    #[error("foreground feature set is empty")]
    EmptyForeground,

    #[error("every decoded proposal is empty")]
    EmptyProposal,

    #[error("no object matches the prompts")]
    NoObject,

    #[error("backend failure: {0}")]
    BackendFailure(String),

    #[error("no class has a non-empty union")]
    NoScoredClasses,

    #[error("no scored pixels")]
    NoScoredPixels,

    #[error("could not place object {index} after {attempts} attempts")]
    PlacementFailure { index: usize, attempts: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid tensor file: {0}")]
    InvalidTensorFile(String),

    #[error(transparent)]
    Frame(#[from] FrameError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
