use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no segmentation map for image `{0}`")]
    MissingSegmentation(String),
    #[error("cannot read image `{id}`: {reason}")]
    UnreadableImage { id: String, reason: String },
    #[error("corpus is empty ({dropped} images dropped for having no building pixels)")]
    EmptyCorpus { dropped: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("image `{0}` has no building pixels")]
    NoBuildingPixels(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at {0}")]
    NonFiniteLoss(String),
    #[error("corpus has {have} images but the batch size is {need}")]
    CorpusTooSmall { have: usize, need: usize },
    #[error("invalid sample grid: {0}")]
    InvalidGridShape(String),
    #[error("need at least {need} samples, got {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("images have mixed sizes: {0}")]
    MixedSizes(String),
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("nothing to export")]
    EmptyInput,
    #[error("invalid configuration field `{field}`: {detail}")]
    Config { field: String, detail: String },
    #[error("bad checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingSegmentation(_) => "MissingSegmentation",
            Error::UnreadableImage { .. } => "UnreadableImage",
            Error::EmptyCorpus { .. } => "EmptyCorpus",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::NoBuildingPixels(_) => "NoBuildingPixels",
            Error::SizeMismatch { .. } => "SizeMismatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFiniteLoss(_) => "NonFiniteLoss",
            Error::CorpusTooSmall { .. } => "CorpusTooSmall",
            Error::InvalidGridShape(_) => "InvalidGridShape",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::MixedSizes(_) => "MixedSizes",
            Error::SingleCluster => "SingleCluster",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::DegenerateSplit(_) => "DegenerateSplit",
            Error::EmptyInput => "EmptyInput",
            Error::Config { .. } => "ConfigError",
            Error::Checkpoint { .. } => "CheckpointError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Image(_) => "ImageError",
        }
    }

    pub fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            detail: detail.into(),
        }
    }
}
