use std::collections::BTreeSet;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde_json::json;

use super::report::{CvPoint, ExperimentReport, LeakageAudit, ModelReport, Provenance, Timestamps};
use super::{DataSource, ExperimentConfig, PipelineError, Result};
use crate::dataset::{
    apply_log_transform, load_csv_with, split_indices, synthesize_firms, ClassMoments, CsvOptions, Dataset,
};
use crate::interpret::{ale_bootstrap, ale_curve, global_shapley, ShapleyConfig};
use crate::metrics;
use crate::models::{
    FannConfig, FittedModel, GbtConfig, LinearBinaryModel, LinearConfig, Link, ModelDocument, ModelFamily, Predictor,
};
use crate::resampling::{mccv_splits, undersample_indices, ResamplingError};
use crate::seed;

// Seed paths of the shared stages.
const SEED_DATA: u64 = 0;
const SEED_SPLIT: u64 = 1;
const SEED_MCCV: u64 = 2;
const SEED_CV_UNDERSAMPLE: u64 = 3;
const SEED_REFIT_UNDERSAMPLE: u64 = 4;
const SEED_CV_FIT: u64 = 5;
const SEED_REFIT: u64 = 6;
const SEED_ALE: u64 = 7;
const SEED_SHAPLEY: u64 = 8;

/// One hyperparameter setting of one model family.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    Linear { link: Link, config: LinearConfig },
    Gbt(GbtConfig),
    Fann(FannConfig),
}

impl Candidate {
    pub fn params(&self) -> serde_json::Value {
        match self {
            Candidate::Linear {
                link: Link::Gev { xi }, ..
            } => json!({ "xi": xi }),
            Candidate::Linear { .. } => json!({}),
            Candidate::Gbt(c) => serde_json::to_value(c).expect("serializable"),
            Candidate::Fann(c) => json!({
                "hidden_size": c.hidden_size,
                "learning_rate": c.learning_rate,
                "epochs": c.epochs,
                "batch_size": c.batch_size,
            }),
        }
    }

    pub fn fit(&self, x: ArrayView2<'_, f64>, y: &[u8], seed: u64) -> crate::models::Result<FittedModel> {
        Ok(match self {
            Candidate::Linear { link, config } => FittedModel::Linear(LinearBinaryModel::fit(x, y, *link, config)?),
            Candidate::Gbt(c) => FittedModel::Trees(crate::models::gbt_fit_matrix(x, y, c)?),
            Candidate::Fann(c) => {
                let c = FannConfig { seed, ..c.clone() };
                FittedModel::Net(crate::models::fann_fit_matrix(x, y, &c)?)
            }
        })
    }

    /// Settings recorded in the model document.
    fn training_config(&self, seed: u64) -> serde_json::Value {
        match self {
            Candidate::Linear { link, config } => json!({ "link": link, "solver": config }),
            Candidate::Gbt(c) => serde_json::to_value(c).expect("serializable"),
            Candidate::Fann(c) => serde_json::to_value(FannConfig { seed, ..c.clone() }).expect("serializable"),
        }
    }
}

/// The hyperparameter grid of `family`, in evaluation order.
pub fn candidates(family: ModelFamily, cfg: &ExperimentConfig) -> Vec<Candidate> {
    let linear = |link| Candidate::Linear {
        link,
        config: cfg.grids.linear.clone(),
    };
    match family {
        ModelFamily::Logit => vec![linear(Link::Logit)],
        ModelFamily::Probit => vec![linear(Link::Probit)],
        ModelFamily::Gev => cfg.grids.gev_xi.iter().map(|&xi| linear(Link::Gev { xi })).collect(),
        ModelFamily::Gbt => cfg.grids.gbt.expand().into_iter().map(Candidate::Gbt).collect(),
        ModelFamily::Fann => cfg.grids.fann.expand().into_iter().map(Candidate::Fann).collect(),
    }
}

/// Records every original row index handed to the tuner or undersampler.
#[derive(Debug, Default)]
pub struct IndexLedger {
    touched: Mutex<BTreeSet<usize>>,
}

impl IndexLedger {
    pub fn record(&self, rows: impl IntoIterator<Item = usize>) {
        self.touched.lock().expect("ledger lock").extend(rows);
    }

    pub fn audit(&self, test: &[usize]) -> LeakageAudit {
        let touched = self.touched.lock().expect("ledger lock");
        LeakageAudit {
            rows_touched: touched.len(),
            test_rows: test.len(),
            overlap: test.iter().filter(|i| touched.contains(i)).count(),
        }
    }
}

/// Loads or synthesises the raw data; returns it with the number of rows
/// dropped on ingestion.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, usize)> {
    match &cfg.data {
        DataSource::Csv { path, decimal_comma } => {
            let opts = CsvOptions {
                decimal_comma: *decimal_comma,
                ..CsvOptions::default()
            };
            let loaded = load_csv_with(path, &opts)?;
            Ok((loaded.dataset, loaded.dropped_rows))
        }
        DataSource::Synthetic {
            n,
            moments,
            moments_path,
            mechanism,
        } => {
            let m = match (moments, moments_path) {
                (Some(m), _) => m.clone(),
                (None, Some(p)) => ClassMoments::from_path(p)?,
                (None, None) => ClassMoments::italian_smes(),
            };
            let mech = mechanism.clone().unwrap_or_default();
            let d = synthesize_firms(&m, *n, seed::derive(cfg.seed, &[SEED_DATA]), &mech)?;
            Ok((d, 0))
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (data, dropped) = load_data(cfg)?;
    run_with_data(cfg, &data, dropped)
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Shared tuning inputs: per MCCV iteration the balanced sub-train rows and
/// the untouched validation rows, as positions in the training set.
struct TuningPlan {
    folds: Vec<(Vec<usize>, Vec<usize>)>,
}

fn plan_tuning(
    cfg: &ExperimentConfig,
    train: &Dataset,
    train_idx: &[usize],
    ledger: &IndexLedger,
) -> Result<TuningPlan> {
    let plan = mccv_splits(
        train.n(),
        cfg.mccv.iterations,
        cfg.mccv.validation_fraction,
        seed::derive(cfg.seed, &[SEED_MCCV]),
    )
    .map_err(|source| PipelineError::Resampling { stage: "mccv", source })?;
    let mut folds = Vec::with_capacity(plan.splits.len());
    for (i, split) in plan.splits.into_iter().enumerate() {
        ledger.record(split.subtrain.iter().chain(&split.validation).map(|&p| train_idx[p]));
        let sub_labels: Vec<u8> = split.subtrain.iter().map(|&p| train.labels()[p]).collect();
        let keep = undersample_indices(&sub_labels, seed::derive(cfg.seed, &[SEED_CV_UNDERSAMPLE, i as u64])).map_err(
            |source| PipelineError::Resampling {
                stage: "mccv undersampling",
                source,
            },
        )?;
        let balanced: Vec<usize> = keep.into_iter().map(|k| split.subtrain[k]).collect();
        folds.push((balanced, split.validation));
    }
    Ok(TuningPlan { folds })
}

fn family_index(f: ModelFamily) -> u64 {
    ModelFamily::ALL.iter().position(|&g| g == f).expect("known family") as u64
}

enum TuneError {
    Model(crate::models::ModelError),
    Metrics(crate::metrics::MetricsError),
}

impl std::fmt::Display for TuneError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TuneError::Model(e) => e.fmt(f),
            TuneError::Metrics(e) => e.fmt(f),
        }
    }
}

/// CV trace per grid point and the first failure in (grid point, iteration) order.
fn cross_validate(
    family: ModelFamily,
    grid: &[Candidate],
    train: &Dataset,
    plan: &TuningPlan,
    base_seed: u64,
) -> (Vec<CvPoint>, Option<TuneError>) {
    let iters = plan.folds.len();
    let fam = family_index(family);
    let mut cells: Vec<std::result::Result<f64, TuneError>> = (0..grid.len() * iters)
        .into_par_iter()
        .map(|cell| {
            let (g, i) = (cell / iters, cell % iters);
            let (fit_rows, val_rows) = &plan.folds[i];
            let x = train.features().select(Axis(0), fit_rows);
            let y: Vec<u8> = fit_rows.iter().map(|&r| train.labels()[r]).collect();
            let seed = seed::derive(base_seed, &[SEED_CV_FIT, fam, g as u64, i as u64]);
            let model = grid[g].fit(x.view(), &y, seed).map_err(TuneError::Model)?;
            let xv = train.features().select(Axis(0), val_rows);
            let yv: Vec<u8> = val_rows.iter().map(|&r| train.labels()[r]).collect();
            metrics::auc(&model.predict_rows(xv.view()), &yv).map_err(TuneError::Metrics)
        })
        .collect();
    let trace = grid
        .iter()
        .enumerate()
        .map(|(g, cand)| {
            let row = &cells[g * iters..(g + 1) * iters];
            let error = row.iter().find_map(|r| r.as_ref().err().map(|e| e.to_string()));
            let aucs: Vec<Option<f64>> = row.iter().map(|r| r.as_ref().ok().copied()).collect();
            let mean_auc = match error {
                None => Some(aucs.iter().flatten().sum::<f64>() / iters as f64),
                Some(_) => None,
            };
            CvPoint {
                params: cand.params(),
                aucs,
                mean_auc,
                error,
            }
        })
        .collect();
    let first_error = cells
        .iter()
        .position(|c| c.is_err())
        .map(|i| cells.swap_remove(i).err().unwrap());
    (trace, first_error)
}

/// Index of the highest mean validation AUC; the first one wins ties.
fn choose(trace: &[CvPoint]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, p) in trace.iter().enumerate() {
        if let Some(m) = p.mean_auc {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((g, m));
            }
        }
    }
    best.map(|(g, _)| g)
}

struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    train: &'a Dataset,
    test: &'a Dataset,
    plan: &'a TuningPlan,
    refit_rows: &'a [usize],
}

fn run_model(family: ModelFamily, s: &Shared<'_>) -> Result<ModelReport> {
    let cfg = s.cfg;
    let fam = family_index(family);
    let grid = candidates(family, cfg);
    let (cv_trace, first_error) = cross_validate(family, &grid, s.train, s.plan, cfg.seed);
    let Some(chosen_index) = choose(&cv_trace) else {
        // Every grid point failed somewhere.
        return Err(match first_error.expect("a failed grid point") {
            TuneError::Model(source) => PipelineError::Model {
                family,
                stage: "tuning",
                source,
            },
            TuneError::Metrics(source) => PipelineError::Metrics { family, source },
        });
    };
    let candidate = &grid[chosen_index];

    let refit_seed = seed::derive(cfg.seed, &[SEED_REFIT, fam]);
    let x = s.train.features().select(Axis(0), s.refit_rows);
    let y: Vec<u8> = s.refit_rows.iter().map(|&r| s.train.labels()[r]).collect();
    let model = candidate
        .fit(x.view(), &y, refit_seed)
        .map_err(|source| PipelineError::Model {
            family,
            stage: "refit",
            source,
        })?;

    let scores = model.predict_rows(s.test.features());
    let test = metrics::evaluate(&scores, s.test.labels(), cfg.metrics.threshold, cfg.metrics.severity)
        .map_err(|source| PipelineError::Metrics { family, source })?;

    let it = &cfg.interpretation;
    let ale = (0..s.train.p())
        .into_par_iter()
        .map(|j| {
            if it.bootstrap >= 2 {
                let seed = seed::derive(cfg.seed, &[SEED_ALE, fam, j as u64]);
                ale_bootstrap(&model, s.train, j, it.bins, it.bootstrap, it.band, seed)
            } else {
                ale_curve(&model, s.train, j, it.bins)
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|source| PipelineError::Interpret { family, source })?;

    let shapley = if family.is_black_box() {
        let sc = ShapleyConfig {
            mode: it.shapley_mode,
            seed: seed::derive(cfg.seed, &[SEED_SHAPLEY, fam]),
            instances: it.shapley_instances,
            background: it.shapley_background,
        };
        Some(global_shapley(&model, s.train, &sc).map_err(|source| PipelineError::Interpret { family, source })?)
    } else {
        None
    };

    let log_names: Vec<String> = s
        .train
        .feature_names()
        .iter()
        .zip(s.train.log_transformed())
        .filter(|(_, &t)| t)
        .map(|(n, _)| n.clone())
        .collect();
    let document = ModelDocument::new(
        model,
        s.train.feature_names().to_vec(),
        log_names,
        candidate.training_config(refit_seed),
        refit_seed,
    );

    Ok(ModelReport {
        family,
        label: family.label().to_string(),
        cv_trace,
        chosen_index,
        chosen: candidate.params(),
        refit_rows: s.refit_rows.len(),
        test,
        ale,
        shapley,
        document,
    })
}

/// The experiment on already-loaded raw data (before log transforms).
pub fn run_with_data(cfg: &ExperimentConfig, raw: &Dataset, dropped_rows: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = now_ms();
    let data = apply_log_transform(raw, &cfg.log_features)?;
    let split_seed = seed::derive(cfg.seed, &[SEED_SPLIT]);
    let (train_idx, test_idx) = split_indices(data.n(), cfg.train_fraction, split_seed)?;
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);

    let ledger = IndexLedger::default();
    let plan = plan_tuning(cfg, &train, &train_idx, &ledger)?;
    ledger.record(train_idx.iter().copied());
    let refit_seed = seed::derive(cfg.seed, &[SEED_REFIT_UNDERSAMPLE]);
    let refit_rows = undersample_indices(train.labels(), refit_seed).map_err(|source| match source {
        ResamplingError::MissingClass(_) => PipelineError::Data(crate::dataset::DatasetError::Invalid(
            "training set lacks one of the classes".into(),
        )),
        source => PipelineError::Resampling {
            stage: "refit undersampling",
            source,
        },
    })?;
    let audit = ledger.audit(&test_idx);
    if audit.overlap > 0 {
        return Err(PipelineError::Leakage(audit.overlap));
    }

    let shared = Shared {
        cfg,
        train: &train,
        test: &test,
        plan: &plan,
        refit_rows: &refit_rows,
    };
    let models = cfg
        .models
        .par_iter()
        .map(|&f| run_model(f, &shared))
        .collect::<Result<Vec<_>>>()?;

    let seeds = vec![
        ("data".to_string(), seed::derive(cfg.seed, &[SEED_DATA])),
        ("split".to_string(), split_seed),
        ("mccv".to_string(), seed::derive(cfg.seed, &[SEED_MCCV])),
        ("refit_undersample".to_string(), refit_seed),
    ];
    let provenance = Provenance {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        seeds,
        data_fingerprint: raw.fingerprint(),
        data_rows: raw.n(),
        dropped_rows,
        train_rows: train.n(),
        test_rows: test.n(),
        train_positives: train.positives(),
        test_positives: test.positives(),
        timestamps: Timestamps {
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
        },
    };
    Ok(ExperimentReport {
        config: cfg.clone(),
        provenance,
        audit,
        models,
    })
}
