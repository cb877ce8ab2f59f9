//! Default prediction for small and medium enterprises with a model-agnostic
//! interpretation layer.
//!
//! The crate is organised the way an experiment flows:
//!
//! - [`dataset`]: firm-level accounting data, CSV ingestion, log transforms,
//!   and a moment-calibrated synthetic generator.
//! - [`resampling`]: Monte Carlo cross-validation splits, majority-class
//!   undersampling and bootstrap index draws.
//! - [`models`]: logit, probit and GEV-link regression, gradient-boosted
//!   trees and a one-hidden-layer feedforward network behind one
//!   probability interface.
//! - [`metrics`]: sensitivity/specificity, AUC and the H-measure.
//! - [`interpret`]: accumulated local effects with bootstrap bands, partial
//!   dependence and Shapley attributions.
//! - [`pipeline`]: the end-to-end experiment and its report/plot outputs.

pub mod dataset;
pub mod interpret;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod resampling;
pub mod seed;

pub use dataset::{ClassMoments, Dataset};
pub use models::{FittedModel, ModelFamily, Predictor};
