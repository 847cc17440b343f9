//! Unsupervised clustering of street-architecture images: segmentation-mask
//! preprocessing, an InfoGAN whose auxiliary head Q is the classifier, a
//! K-means baseline and the evaluation protocol.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix the
//! pipeline's working precision.

pub mod baseline;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod infogan;
pub mod nn;
pub mod preprocess;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision of the CLI pipeline.
pub type Real = f32;
pub type Record = dataset::ImageRecord<Real>;
pub type Checkpoint = infogan::GanCheckpoint<Real>;
pub type Assignment = infogan::ClusterAssignment<Real>;
pub type KMeans = baseline::KMeansResult<Real>;
