//! Five binary default classifiers behind one probability interface.
//!
//! Interpretation code only ever sees a [`Predictor`]: a function from a
//! feature row to a probability of default. [`FittedModel`] is the concrete
//! tagged union produced by the fitters, and [`ModelDocument`] is its
//! versioned on-disk form.

mod fann;
mod gbt;
mod linear;

pub(crate) use fann::fit_fann_matrix as fann_fit_matrix;
pub use fann::{fit_fann, FannConfig, FeedforwardNet};
pub(crate) use gbt::fit_gbt_matrix as gbt_fit_matrix;
pub use gbt::{fit_gbt, leaf_weight, GbtConfig, Node, Tree, TreeEnsemble};
pub use linear::{
    fit_gev_search, fit_linear, gev_xi_grid, Convergence, GevSearch, LinearBinaryModel, LinearConfig, Link,
};

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected {expected} features, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite input at row {0}")]
    NonFiniteInput(usize),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no convergence after {iterations} iterations (last change in log-likelihood {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },
    #[error("perfect separation detected (coefficient magnitude above {limit})")]
    PerfectSeparation { limit: f64 },
    #[error("singular information matrix")]
    Singular,
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },
    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// A fitted probability model `x -> P(default | x)`.
pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;

    /// Unchecked prediction for one row of width [`Predictor::n_features`].
    fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64;

    fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
        rows.outer_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Checked batch prediction: validates width and finiteness first.
pub fn predict_proba<P: Predictor + ?Sized>(model: &P, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if rows.ncols() != model.n_features() {
        return Err(ModelError::WidthMismatch {
            expected: model.n_features(),
            got: rows.ncols(),
        });
    }
    if let Some(i) = rows.outer_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(ModelError::NonFiniteInput(i));
    }
    Ok(model.predict_rows(rows))
}

/// Wraps a closure as a [`Predictor`]; handy for analytic test models.
pub struct FnPredictor<F> {
    width: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync,
{
    pub fn new(width: usize, f: F) -> Self {
        Self { width, f }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync,
{
    fn n_features(&self) -> usize {
        self.width
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        (self.f)(row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    #[serde(rename = "lr", alias = "logit")]
    Logit,
    Probit,
    #[serde(alias = "bgeva")]
    Gev,
    #[serde(alias = "xgboost")]
    Gbt,
    Fann,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [Self::Logit, Self::Probit, Self::Gev, Self::Gbt, Self::Fann];

    /// Reporting order of the performance table: black boxes first.
    pub const TABLE_ORDER: [ModelFamily; 5] = [Self::Fann, Self::Gbt, Self::Gev, Self::Logit, Self::Probit];

    pub fn key(self) -> &'static str {
        match self {
            Self::Logit => "lr",
            Self::Probit => "probit",
            Self::Gev => "gev",
            Self::Gbt => "gbt",
            Self::Fann => "fann",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Logit => "Logistic regression",
            Self::Probit => "Probit regression",
            Self::Gev => "GEV-link regression",
            Self::Gbt => "Gradient boosted trees",
            Self::Fann => "Feedforward neural network",
        }
    }

    pub fn is_black_box(self) -> bool {
        matches!(self, Self::Gbt | Self::Fann)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lr" | "logit" => Ok(Self::Logit),
            "probit" => Ok(Self::Probit),
            "gev" | "bgeva" => Ok(Self::Gev),
            "gbt" | "xgboost" => Ok(Self::Gbt),
            "fann" => Ok(Self::Fann),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearBinaryModel),
    Trees(TreeEnsemble),
    Net(FeedforwardNet),
}

impl FittedModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            Self::Linear(m) => match m.link {
                Link::Logit => ModelFamily::Logit,
                Link::Probit => ModelFamily::Probit,
                Link::Gev { .. } => ModelFamily::Gev,
            },
            Self::Trees(_) => ModelFamily::Gbt,
            Self::Net(_) => ModelFamily::Fann,
        }
    }

    fn inner(&self) -> &dyn Predictor {
        match self {
            Self::Linear(m) => m,
            Self::Trees(m) => m,
            Self::Net(m) => m,
        }
    }
}

impl Predictor for FittedModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        self.inner().predict_row(row)
    }

    fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
        self.inner().predict_rows(rows)
    }
}

pub const MODEL_DOCUMENT_VERSION: u32 = 1;

/// Versioned JSON form of a fitted model. Floats are written with
/// round-trip precision, so a reloaded model predicts bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub family: ModelFamily,
    pub feature_names: Vec<String>,
    /// Features that must be passed through `ln(max(x, 0) + 1)` before prediction.
    pub log_transformed: Vec<String>,
    pub training_config: serde_json::Value,
    pub seed: u64,
    pub model: FittedModel,
}

impl ModelDocument {
    pub fn new(
        model: FittedModel,
        feature_names: Vec<String>,
        log_transformed: Vec<String>,
        training_config: serde_json::Value,
        seed: u64,
    ) -> Self {
        Self {
            format_version: MODEL_DOCUMENT_VERSION,
            family: model.family(),
            feature_names,
            log_transformed,
            training_config,
            seed,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.format_version != MODEL_DOCUMENT_VERSION {
            return Err(ModelError::UnsupportedVersion(doc.format_version));
        }
        Ok(doc)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn check_training(x: ArrayView2<'_, f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(ModelError::InvalidConfig(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if let Some(i) = x.outer_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(ModelError::NonFiniteInput(i));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}
