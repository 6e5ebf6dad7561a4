//! Datasets, the training loop, metrics and experiment orchestration.

mod config;
mod data;
mod experiment;
mod idx;
mod metrics;
mod record;
mod sweep;

use std::path::Path;

use thiserror::Error;

pub use config::{DatasetSpec, ExperimentConfig, Method, OptimizerSpec, PruningSpec};
pub use data::{epoch_batches, gen_blobs, gen_moons, Dataset, Samples, Split};
pub use experiment::{load_dataset, run_experiment, Pruner, RunOutput, RunSummary};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx, load_idx_splits, read_idx_images, read_idx_labels, IdxError,
};
pub use metrics::{accuracy, count_flops, count_params, scan_zeroed_groups};
pub use record::{EpochRow, RunRecord, StepRow};
pub use sweep::{compare_methods, run_sweep, Comparison, MethodStats, SweepAxis, SweepRow, SweepSummary};

use crate::dpm::DpmError;
use crate::nn::{CheckpointError, NnError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Dpm(#[from] DpmError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }

    pub fn is_io(&self) -> bool {
        matches!(self, HarnessError::Io { .. } | HarnessError::Idx(IdxError::Io { .. }))
            || matches!(self, HarnessError::Checkpoint(CheckpointError::Io(_)))
    }
}
