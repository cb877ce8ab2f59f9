//! The end-to-end experiment: data, split, tuning by Monte Carlo
//! cross-validation on undersampled training data, refit, test metrics and
//! interpretation, then JSON/CSV/SVG outputs.

mod config;
mod emit;
mod report;
mod run;
mod svg;

pub use config::{
    DataSource, ExperimentConfig, FannGrid, GbtGrid, Grids, InterpretationConfig, MccvConfig, MetricSettings,
};
pub use emit::{emit_outputs, metrics_csv, Manifest, ManifestEntry};
pub use report::{CvPoint, ExperimentReport, LeakageAudit, ModelReport, Provenance, Timestamps};
pub use run::{candidates, load_data, run_experiment, run_with_data, Candidate, IndexLedger};
pub use svg::{ale_svg, shapley_svg};

use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::interpret::InterpretError;
use crate::metrics::MetricsError;
use crate::models::{ModelError, ModelFamily};
use crate::resampling::ResamplingError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DatasetError),
    #[error("resampling failed during {stage}: {source}")]
    Resampling {
        stage: &'static str,
        source: ResamplingError,
    },
    #[error("{family} failed during {stage}: {source}")]
    Model {
        family: ModelFamily,
        stage: &'static str,
        source: ModelError,
    },
    #[error("{family} interpretation failed: {source}")]
    Interpret {
        family: ModelFamily,
        source: InterpretError,
    },
    #[error("{family} evaluation failed: {source}")]
    Metrics { family: ModelFamily, source: MetricsError },
    #[error("{0} test rows reached the tuning stage")]
    Leakage(usize),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Process exit status: 1 config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Data(_) | Self::Resampling { .. } | Self::Io { .. } | Self::Json(_) => 2,
            Self::Model { source, .. } => match source {
                ModelError::InvalidConfig(_) => 1,
                ModelError::SingleClass | ModelError::NonFiniteInput(_) | ModelError::WidthMismatch { .. } => 2,
                _ => 3,
            },
            Self::Interpret { source, .. } => match source {
                InterpretError::InvalidBins
                | InterpretError::InvalidReplicates(_)
                | InterpretError::InvalidBand { .. }
                | InterpretError::InvalidPermutations
                | InterpretError::TooManyFeatures { .. } => 1,
                _ => 2,
            },
            Self::Metrics { source, .. } => match source {
                MetricsError::InvalidSeverity { .. } => 1,
                MetricsError::NonFiniteScore => 3,
                _ => 2,
            },
            Self::Leakage(_) => 3,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
