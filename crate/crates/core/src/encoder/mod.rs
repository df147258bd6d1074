//! Voxel-wise encoding model: architecture, forward pass and gradients,
//! training, and evaluation metrics.

mod dataset;
mod mlp;
mod stats;
mod train;

use thiserror::Error;

pub use dataset::ResponseDataset;
pub use mlp::{Dense, EncoderArchitecture, EncoderModel, Gradients};
pub use stats::{normalize_per_session, pearson_per_voxel, Normalized, VoxelCorrelations};
pub use train::{
    mean_pearson, train, train_with_observer, EarlyStopping, EpochRecord, TrainConfig, TrainLog,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("parameter shape error: {0}")]
    ParameterShape(String),
    #[error("input has length {actual}, model expects {expected}")]
    InputLength { expected: usize, actual: usize },
    #[error("cotangent has length {actual}, model has {expected} voxels")]
    CotangentLength { expected: usize, actual: usize },
    #[error("target has length {actual}, model has {expected} voxels")]
    TargetLength { expected: usize, actual: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("dataset is empty or too small")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {needed} samples, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },
    #[error("session {session} has {samples} sample(s); per-session normalization needs at least 2")]
    SessionTooSmall { session: u32, samples: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}
