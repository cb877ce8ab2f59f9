//! Experiment configuration, read from a JSON document. Every field has a
//! default, so `{}` is a valid config: 20 000 synthetic firms from the built-in
//! Italian SME class moments.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::dataset::{ClassMoments, LabelMechanism};
use crate::interpret::{ShapleyConfig, ShapleyMode};
use crate::metrics::Severity;
use crate::models::{gev_xi_grid, FannConfig, GbtConfig, LinearConfig, ModelFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        decimal_comma: bool,
    },
    Synthetic {
        n: usize,
        /// Inline class moments; the built-in Italian SME moments when absent.
        #[serde(default)]
        moments: Option<ClassMoments>,
        /// Moments file, used when `moments` is absent.
        #[serde(default)]
        moments_path: Option<PathBuf>,
        #[serde(default)]
        mechanism: Option<LabelMechanism>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            n: 20_000,
            moments: None,
            moments_path: None,
            mechanism: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MccvConfig {
    pub iterations: usize,
    pub validation_fraction: f64,
}

impl Default for MccvConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            validation_fraction: 0.3,
        }
    }
}

/// Cartesian grid over boosting settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub l2: Vec<f64>,
    pub min_child_weight: Vec<f64>,
}

impl Default for GbtGrid {
    fn default() -> Self {
        Self {
            n_trees: vec![50, 100],
            max_depth: vec![2, 3],
            learning_rate: vec![0.1],
            l2: vec![1.0],
            min_child_weight: vec![1.0],
        }
    }
}

impl GbtGrid {
    pub fn expand(&self) -> Vec<GbtConfig> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &learning_rate in &self.learning_rate {
                    for &l2 in &self.l2 {
                        for &min_child_weight in &self.min_child_weight {
                            out.push(GbtConfig {
                                n_trees,
                                max_depth,
                                learning_rate,
                                l2,
                                min_child_weight,
                                base_score: None,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Cartesian grid over network settings; the fit seed is set per work unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FannGrid {
    pub hidden_size: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
    pub batch_size: Vec<usize>,
}

impl Default for FannGrid {
    fn default() -> Self {
        Self {
            hidden_size: vec![4, 8],
            learning_rate: vec![0.05, 0.2],
            epochs: vec![200],
            batch_size: vec![32],
        }
    }
}

impl FannGrid {
    pub fn expand(&self) -> Vec<FannConfig> {
        let mut out = Vec::new();
        for &hidden_size in &self.hidden_size {
            for &learning_rate in &self.learning_rate {
                for &epochs in &self.epochs {
                    for &batch_size in &self.batch_size {
                        out.push(FannConfig {
                            hidden_size,
                            learning_rate,
                            epochs,
                            batch_size,
                            seed: 0,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// Solver settings shared by the logit, probit and GEV fits.
    pub linear: LinearConfig,
    pub gev_xi: Vec<f64>,
    pub gbt: GbtGrid,
    pub fann: FannGrid,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            linear: LinearConfig::default(),
            gev_xi: gev_xi_grid(),
            gbt: GbtGrid::default(),
            fann: FannGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretationConfig {
    pub bins: usize,
    /// Bootstrap replicates for the ALE bands; 0 disables the bands.
    pub bootstrap: usize,
    pub band: (f64, f64),
    pub shapley_instances: usize,
    pub shapley_background: usize,
    pub shapley_mode: ShapleyMode,
}

impl Default for InterpretationConfig {
    fn default() -> Self {
        let s = ShapleyConfig::default();
        Self {
            bins: 40,
            bootstrap: 100,
            band: (0.05, 0.95),
            shapley_instances: s.instances,
            shapley_background: s.background,
            shapley_mode: s.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub threshold: f64,
    pub severity: Severity,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            severity: Severity::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub seed: u64,
    pub train_fraction: f64,
    pub mccv: MccvConfig,
    pub models: Vec<ModelFamily>,
    pub grids: Grids,
    pub interpretation: InterpretationConfig,
    pub metrics: MetricSettings,
    /// Log-transformed before modelling.
    pub log_features: Vec<String>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            seed: 42,
            train_fraction: 0.7,
            mccv: MccvConfig::default(),
            models: ModelFamily::ALL.to_vec(),
            grids: Grids::default(),
            interpretation: InterpretationConfig::default(),
            metrics: MetricSettings::default(),
            log_features: crate::dataset::SIZE_FEATURES.iter().map(|s| s.to_string()).collect(),
            output_dir: None,
        }
    }
}

fn open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !open_unit(self.train_fraction) {
            return bad(format!("train_fraction {} not in (0, 1)", self.train_fraction));
        }
        if !open_unit(self.mccv.validation_fraction) {
            return bad(format!(
                "mccv.validation_fraction {} not in (0, 1)",
                self.mccv.validation_fraction
            ));
        }
        if self.mccv.iterations == 0 {
            return bad("mccv.iterations must be >= 1".into());
        }
        let mut seen = Vec::new();
        for &m in &self.models {
            if seen.contains(&m) {
                return bad(format!("model `{m}` listed twice"));
            }
            seen.push(m);
            let empty = match m {
                ModelFamily::Logit | ModelFamily::Probit => false,
                ModelFamily::Gev => self.grids.gev_xi.is_empty(),
                ModelFamily::Gbt => self.grids.gbt.expand().is_empty(),
                ModelFamily::Fann => self.grids.fann.expand().is_empty(),
            };
            if empty {
                return bad(format!("empty hyperparameter grid for `{m}`"));
            }
        }
        if self.grids.gev_xi.iter().any(|x| !x.is_finite()) {
            return bad("non-finite gev_xi value".into());
        }
        for g in self.grids.gbt.expand() {
            g.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        let it = &self.interpretation;
        if it.bins == 0 {
            return bad("interpretation.bins must be >= 1".into());
        }
        if it.bootstrap == 1 {
            return bad("interpretation.bootstrap must be 0 or >= 2".into());
        }
        let (lo, hi) = it.band;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return bad(format!("interpretation.band ({lo}, {hi})"));
        }
        if it.shapley_instances == 0 || it.shapley_background == 0 {
            return bad("Shapley sample sizes must be >= 1".into());
        }
        if !self.metrics.threshold.is_finite() {
            return bad("metrics.threshold must be finite".into());
        }
        if let DataSource::Synthetic { n, .. } = self.data {
            if n < 100 {
                return bad(format!("synthetic n = {n} is below 100"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
