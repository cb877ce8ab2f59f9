//! Firm-level accounting data.
//!
//! A [`Dataset`] is an immutable feature matrix with binary default labels
//! (1 = default) and per-feature metadata. Construction validates the
//! invariants once so downstream stages can index freely.

mod io;
mod moments;
mod synth;

pub use io::{load_csv, load_csv_with, write_csv, CsvOptions, Loaded};
pub use moments::{ClassMoments, FeatureMoments};
pub use synth::{synthesize_firms, FeatureShape, LabelMechanism, ShapeKind};

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

/// Column order of the accounting indicators in CSV files and synthetic data.
pub const FEATURES: [&str; 9] = [
    "cash_flow",
    "gearing_ratio",
    "employees",
    "profit_margin",
    "roce",
    "roe",
    "sales",
    "solvency_ratio",
    "total_assets",
];

/// Size variables that are modelled on the log scale.
pub const SIZE_FEATURES: [&str; 3] = ["sales", "total_assets", "employees"];

pub const STATUS_COLUMN: &str = "status";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("invalid label {value:?} on data row {row}")]
    InvalidLabel { row: usize, value: String },
    #[error("no usable rows after dropping {dropped} incomplete rows")]
    NoUsableRows { dropped: usize },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("{n} rows cannot be split with fraction {fraction}")]
    TooSmall { n: usize, fraction: f64 },
    #[error("invalid class moments: {0}")]
    InvalidMoments(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    log_transformed: Vec<bool>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let p = feature_names.len();
        Self::with_flags(features, labels, feature_names, vec![false; p])
    }

    pub fn with_flags(
        features: Array2<f64>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        log_transformed: Vec<bool>,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 || p == 0 {
            return Err(DatasetError::Invalid(format!("empty matrix {n}x{p}")));
        }
        if labels.len() != n {
            return Err(DatasetError::Invalid(format!("{} labels for {n} rows", labels.len())));
        }
        if feature_names.len() != p || log_transformed.len() != p {
            return Err(DatasetError::Invalid(format!(
                "{} names / {} flags for {p} columns",
                feature_names.len(),
                log_transformed.len()
            )));
        }
        if let Some((row, &v)) = labels.iter().enumerate().find(|(_, &y)| y > 1) {
            return Err(DatasetError::InvalidLabel {
                row,
                value: v.to_string(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Invalid("non-finite feature value".into()));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::Invalid(format!("duplicate feature `{name}`")));
            }
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            log_transformed,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn log_transformed(&self) -> &[bool] {
        &self.log_transformed
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.features.column(j)
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| DatasetError::UnknownFeature(name.to_string()))
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.positives();
        pos > 0 && pos < self.n()
    }

    /// Rows at `indices` (repeats allowed), in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            log_transformed: self.log_transformed.clone(),
        }
    }

    /// Order-independent SHA-256 fingerprint over shape, names, values and labels.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.p() as u64).to_le_bytes());
        for name in &self.feature_names {
            h.update(name.as_bytes());
            h.update([0]);
        }
        for v in self.features.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(&self.labels);
        hex::encode(h.finalize())
    }
}

/// Replaces each targeted column by `ln(max(x, 0) + 1)`; all other columns
/// are left untouched.
pub fn apply_log_transform<S: AsRef<str>>(d: &Dataset, targets: &[S]) -> Result<Dataset> {
    let idx: Vec<usize> = targets
        .iter()
        .map(|t| d.feature_index(t.as_ref()))
        .collect::<Result<_>>()?;
    let mut out = d.clone();
    for j in idx {
        out.features.column_mut(j).mapv_inplace(|x| (x.max(0.0) + 1.0).ln());
        out.log_transformed[j] = true;
    }
    Ok(out)
}

/// Train/test index partition: `floor(n * train_fraction)` training rows.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    let n_train = crate::resampling::part_size(n, train_fraction);
    if n_train < 1 || n_train >= n {
        return Err(DatasetError::TooSmall {
            n,
            fraction: train_fraction,
        });
    }
    let perm = crate::resampling::permutation(n, seed);
    let (train, test) = perm.split_at(n_train);
    Ok((train.to_vec(), test.to_vec()))
}

pub fn split_train_test(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(d.n(), train_fraction, seed)?;
    Ok((d.subset(&train), d.subset(&test)))
}
