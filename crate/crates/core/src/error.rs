use std::io;

use thiserror::Error;

/// Errors produced anywhere in the channel-mapping toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid frequency plan: {0}")]
    InvalidPlan(String),

    #[error("need at least {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("invalid antenna mask: {0}")]
    InvalidMask(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("incompatible layer dimensions: {0}")]
    IncompatibleDims(String),

    #[error("target vector has zero norm")]
    ZeroTarget,

    #[error("channel is all-zero on subcarrier {subcarrier}")]
    ZeroChannel { subcarrier: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
