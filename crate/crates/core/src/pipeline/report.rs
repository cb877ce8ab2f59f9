use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::interpret::{AleCurve, ShapleySummary};
use crate::metrics::MetricsReport;
use crate::models::{ModelDocument, ModelFamily};

/// One grid point's cross-validation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub params: serde_json::Value,
    /// Validation AUC per MCCV iteration; `None` where the fit failed.
    pub aucs: Vec<Option<f64>>,
    /// Mean over iterations; `None` (not selectable) if any iteration failed.
    pub mean_auc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub family: ModelFamily,
    pub label: String,
    pub cv_trace: Vec<CvPoint>,
    pub chosen_index: usize,
    pub chosen: serde_json::Value,
    /// Rows of the undersampled training set used for the refit.
    pub refit_rows: usize,
    pub test: MetricsReport,
    pub ale: Vec<AleCurve>,
    pub shapley: Option<ShapleySummary>,
    pub document: ModelDocument,
}

impl ModelReport {
    /// Number of (grid point, iteration) cells in the CV trace.
    pub fn cv_entries(&self) -> usize {
        self.cv_trace.iter().map(|p| p.aucs.len()).sum()
    }
}

/// Result of the index instrumentation around tuning and undersampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    /// Distinct original row indices handed to the tuner or undersampler.
    pub rows_touched: usize,
    pub test_rows: usize,
    pub overlap: usize,
}

/// Wall-clock information; the only part of a report that varies between
/// identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Derived seeds of the shared stages, by name.
    pub seeds: Vec<(String, u64)>,
    /// SHA-256 of the data as loaded, before transforms.
    pub data_fingerprint: String,
    pub data_rows: usize,
    pub dropped_rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_positives: usize,
    pub test_positives: usize,
    pub timestamps: Timestamps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub audit: LeakageAudit,
    pub models: Vec<ModelReport>,
}

impl ExperimentReport {
    pub fn model(&self, family: ModelFamily) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.family == family)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// JSON with the timestamps zeroed, for run-to-run comparison.
    pub fn to_json_without_timestamps(&self) -> serde_json::Result<String> {
        let mut copy = self.clone();
        copy.provenance.timestamps = Timestamps {
            started_unix_ms: 0,
            finished_unix_ms: 0,
        };
        copy.to_json()
    }
}
