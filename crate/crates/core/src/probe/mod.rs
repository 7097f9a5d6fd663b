//! Spatial probes: a per-position classifier trained on frozen-encoder
//! feature maps to recover each grid cell's color.

use thiserror::Error;

pub mod checkpoint;
pub mod features;
pub mod g2mf;
pub mod model;
pub mod optim;
pub mod train;

pub use features::{interpolate, load_features, reshape_grid, synthetic_features, FeatureMap, Features, TokenSequence};
pub use g2mf::{FormatError, Tensor};
pub use model::{cross_entropy, gradient_check, ProbeParams};
pub use optim::{AdamW, LrSchedule};
pub use train::{evaluate, predict, train, train_with_progress, EvalPoint, ProbeEvaluation, Sample, SampleSource, TrainConfig, TrainLog};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: u8, classes: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Diverged { iteration: usize, loss: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}
