//! Model-agnostic interpretation. Everything here works through
//! [`Predictor`](crate::models::Predictor) and never looks inside a model.
//!
//! - [`ale_curve`] / [`ale_bootstrap`]: accumulated local effects with
//!   percentile bands from data resampling.
//! - [`pd_curve`]: partial dependence, centred like ALE.
//! - [`shapley_instance`] / [`global_shapley`]: Shapley attributions with a
//!   background-substitution value function.

mod ale;
mod pd;
mod shapley;

pub use ale::{ale_bootstrap, ale_curve, ale_on_grid, quantile_grid, AleCurve, AlePoint, BinGrid};
pub use pd::{compare_ale_pd, pd_curve, pd_on_ale_grid, AlePdComparison, PdCurve};
pub use shapley::{
    global_shapley, shapley_exact, shapley_instance, shapley_sampling, Importance, ShapleyConfig, ShapleyMode,
    ShapleySummary,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InterpretError {
    #[error("dataset is empty")]
    EmptyData,
    #[error("feature index {feature} out of range for {p} features")]
    FeatureOutOfRange { feature: usize, p: usize },
    #[error("model expects {expected} features, data has {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("bin count must be at least 1")]
    InvalidBins,
    #[error("at least 2 bootstrap replicates are required, got {0}")]
    InvalidReplicates(usize),
    #[error("band quantiles must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("evaluation grid must be nonempty, finite and sorted")]
    InvalidGrid,
    #[error("exact Shapley enumeration supports at most {max} features, got {p}")]
    TooManyFeatures { p: usize, max: usize },
    #[error("at least one permutation is required")]
    InvalidPermutations,
}

pub type Result<T, E = InterpretError> = std::result::Result<T, E>;

pub(crate) fn check_inputs<P: crate::models::Predictor + ?Sized>(
    model: &P,
    d: &crate::dataset::Dataset,
    feature: usize,
) -> Result<()> {
    if d.n() == 0 {
        return Err(InterpretError::EmptyData);
    }
    if model.n_features() != d.p() {
        return Err(InterpretError::WidthMismatch {
            expected: model.n_features(),
            got: d.p(),
        });
    }
    if feature >= d.p() {
        return Err(InterpretError::FeatureOutOfRange { feature, p: d.p() });
    }
    Ok(())
}
