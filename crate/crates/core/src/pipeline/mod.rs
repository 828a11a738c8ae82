//! Dataset ingestion, deterministic splitting, the training loop, metric
//! computation, ablation runs, and single-snippet prediction.

mod dataset;
mod metrics;
pub mod synth;
mod trainer;

pub use crate::nn::AblationMask;
pub use dataset::{load_dataset, split, LabeledSnippet, SplitSpec};
pub use metrics::Metrics;
pub use trainer::{
    ablate, encode_source, evaluate, predict, prepare_snippet, standard_masks, train, EpochRow,
    Prepared, TrainOutput,
};
