//! Binary-response GLMs with logit, probit and GEV links, fitted by Fisher
//! scoring (IRLS) with step halving.
//!
//! The GEV link uses the response `pi(eta) = exp(-(1 + xi * eta)^(-1/xi))`,
//! i.e. the GEV distribution function evaluated at the linear predictor,
//! with the Gumbel limit `exp(-exp(-eta))` at `xi = 0`. Its support is
//! `1 + xi * eta > 0`; outside it the response saturates at 0 (`xi > 0`) or
//! 1 (`xi < 0`).
//!
//! Fitting runs on internally standardised columns for conditioning; the
//! stored coefficients are mapped back to per-unit-of-feature scale.

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use super::{check_training, sigmoid, ModelError, Predictor, Result};
use crate::dataset::Dataset;
use crate::metrics;
use crate::resampling;

const XI_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "link", rename_all = "snake_case")]
pub enum Link {
    Logit,
    Probit,
    Gev { xi: f64 },
}

impl Link {
    /// `(pi, 1 - pi)`, each computed without cancellation.
    pub fn probs(self, eta: f64) -> (f64, f64) {
        match self {
            Link::Logit => (sigmoid(eta), sigmoid(-eta)),
            Link::Probit => {
                let s = std::f64::consts::SQRT_2;
                (0.5 * erfc(-eta / s), 0.5 * erfc(eta / s))
            }
            Link::Gev { xi } => match gev_t(xi, eta) {
                Some(t) => ((-t).exp(), -(-t).exp_m1()),
                None if xi > 0.0 => (0.0, 1.0),
                None => (1.0, 0.0),
            },
        }
    }

    pub fn inverse(self, eta: f64) -> f64 {
        self.probs(eta).0
    }

    /// `d pi / d eta` (zero outside the GEV support).
    pub fn derivative(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = sigmoid(eta);
                p * (1.0 - p)
            }
            Link::Probit => (-0.5 * eta * eta).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Link::Gev { xi } => match gev_t(xi, eta) {
                Some(t) => (-t).exp() * t.powf(1.0 + xi),
                None => 0.0,
            },
        }
    }

    pub fn in_support(self, eta: f64) -> bool {
        match self {
            Link::Gev { xi } => xi.abs() < XI_ZERO || 1.0 + xi * eta > 0.0,
            _ => true,
        }
    }

    /// Linear predictor whose response equals `p`.
    pub fn quantile(self, p: f64) -> f64 {
        match self {
            Link::Logit => (p / (1.0 - p)).ln(),
            Link::Probit => Normal::standard().inverse_cdf(p),
            Link::Gev { xi } => {
                let l = -p.ln();
                if xi.abs() < XI_ZERO {
                    -l.ln()
                } else {
                    (l.powf(-xi) - 1.0) / xi
                }
            }
        }
    }
}

/// `t = (1 + xi * eta)^(-1/xi)`, or `None` outside the support.
fn gev_t(xi: f64, eta: f64) -> Option<f64> {
    if xi.abs() < XI_ZERO {
        return Some((-eta).exp());
    }
    let base = 1.0 + xi * eta;
    (base > 0.0).then(|| base.powf(-1.0 / xi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearConfig {
    pub max_iter: usize,
    /// Converged once the log-likelihood changes by less than this.
    pub tolerance: f64,
    /// Add `ridge * I` to the information matrix when it is singular or
    /// coefficients blow up; when disabled those cases are errors.
    pub ridge_fallback: bool,
    pub ridge: f64,
    /// Magnitude limit on standardised-scale coefficients.
    pub coefficient_limit: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tolerance: 1e-8,
            ridge_fallback: true,
            ridge: 1e-6,
            coefficient_limit: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted iteration, starting from the
    /// intercept-only start value.
    pub trace: Vec<f64>,
    pub ridge_used: bool,
    /// False when the iteration cap stopped the fit before the tolerance
    /// was met.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBinaryModel {
    #[serde(flatten)]
    pub link: Link,
    /// Intercept first, then one coefficient per feature (raw units).
    pub coefficients: Vec<f64>,
    pub convergence: Convergence,
}

impl LinearBinaryModel {
    pub fn linear_predictor(&self, row: ArrayView1<'_, f64>) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(row.iter())
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    /// Fits on a raw design (no intercept column; one is added). A design
    /// with zero columns gives the intercept-only model.
    pub fn fit(x: ArrayView2<'_, f64>, y: &[u8], link: Link, cfg: &LinearConfig) -> Result<Self> {
        check_training(x, y)?;
        if let Link::Gev { xi } = link {
            if !xi.is_finite() {
                return Err(ModelError::InvalidConfig(format!("gev tail {xi}")));
            }
        }
        let (n, p) = x.dim();
        let q = p + 1;

        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 0..p {
            let col = x.column(j);
            let m = col.sum() / n as f64;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            center[j] = m;
            scale[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        let mut z = DMatrix::<f64>::zeros(n, q);
        for i in 0..n {
            z[(i, 0)] = 1.0;
            for j in 0..p {
                z[(i, j + 1)] = (x[[i, j]] - center[j]) / scale[j];
            }
        }
        let yv: Vec<f64> = y.iter().map(|&v| v as f64).collect();

        let ybar = yv.iter().sum::<f64>() / n as f64;
        let mut beta = DVector::<f64>::zeros(q);
        beta[0] = link.quantile(ybar);
        let mut ll = log_likelihood(&z, &yv, &beta, link);
        if !ll.is_finite() {
            return Err(ModelError::InvalidConfig("start value outside link support".into()));
        }
        let mut trace = vec![ll];
        let mut ridge_used = false;
        let mut converged = false;
        let mut last_change = f64::INFINITY;
        let mut iterations = 0;

        while iterations < cfg.max_iter {
            iterations += 1;
            let eta = &z * &beta;
            let mut info = DMatrix::<f64>::zeros(q, q);
            let mut score = DVector::<f64>::zeros(q);
            for i in 0..n {
                let (mu, one_minus) = link.probs(eta[i]);
                let d = link.derivative(eta[i]);
                let v = (mu * one_minus).max(1e-300);
                let w = d * d / v;
                let r = (yv[i] - mu) * d / v;
                let row = z.row(i);
                for a in 0..q {
                    score[a] += r * row[a];
                    let wa = w * row[a];
                    for b in 0..=a {
                        info[(a, b)] += wa * row[b];
                    }
                }
            }
            for a in 0..q {
                for b in 0..a {
                    info[(b, a)] = info[(a, b)];
                }
            }
            if ridge_used {
                for a in 0..q {
                    info[(a, a)] += cfg.ridge;
                }
            }
            let step = match info.clone().cholesky() {
                Some(ch) => ch.solve(&score),
                None if cfg.ridge_fallback => {
                    ridge_used = true;
                    let mut r = info;
                    for a in 0..q {
                        r[(a, a)] += cfg.ridge;
                    }
                    match r.cholesky() {
                        Some(ch) => ch.solve(&score),
                        None => return Err(ModelError::Singular),
                    }
                }
                None => return Err(ModelError::Singular),
            };

            // Step halving keeps the log-likelihood non-decreasing.
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let cand = &beta + &step * t;
                let cand_ll = log_likelihood(&z, &yv, &cand, link);
                if cand_ll.is_finite() && cand_ll >= ll {
                    accepted = Some((cand, cand_ll));
                    break;
                }
                t *= 0.5;
            }
            let Some((next, next_ll)) = accepted else {
                converged = true;
                break;
            };
            last_change = next_ll - ll;
            beta = next;
            ll = next_ll;
            trace.push(ll);

            // A near-zero log-likelihood means every row is fitted perfectly:
            // the coefficients would diverge if allowed to.
            if beta.iter().any(|b| b.abs() > cfg.coefficient_limit) || ll > -1e-6 {
                if !cfg.ridge_fallback {
                    return Err(ModelError::PerfectSeparation {
                        limit: cfg.coefficient_limit,
                    });
                }
                ridge_used = true;
            }
            if last_change.abs() < cfg.tolerance {
                converged = true;
                break;
            }
        }
        // Stopping at the cap is accepted unless the ridge was already needed.
        if !converged && ridge_used {
            return Err(ModelError::NonConvergence {
                iterations,
                last_change,
            });
        }

        let mut coefficients = vec![0.0; q];
        coefficients[0] = beta[0];
        for j in 0..p {
            coefficients[j + 1] = beta[j + 1] / scale[j];
            coefficients[0] -= beta[j + 1] * center[j] / scale[j];
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::Singular);
        }
        Ok(Self {
            link,
            coefficients,
            convergence: Convergence {
                iterations,
                log_likelihood: ll,
                trace,
                ridge_used,
                converged,
            },
        })
    }

    /// Odds ratios `exp(beta)` for reporting; intercept first.
    pub fn odds_ratios(&self) -> Vec<f64> {
        self.coefficients.iter().map(|b| b.exp()).collect()
    }
}

fn log_likelihood(z: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, link: Link) -> f64 {
    let eta = z * beta;
    let mut ll = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        if !link.in_support(eta[i]) {
            return f64::NEG_INFINITY;
        }
        let (mu, one_minus) = link.probs(eta[i]);
        let term = match link {
            Link::Logit => {
                if yi > 0.5 {
                    -super::softplus(-eta[i])
                } else {
                    -super::softplus(eta[i])
                }
            }
            _ => {
                if yi > 0.5 {
                    mu.ln()
                } else {
                    one_minus.ln()
                }
            }
        };
        ll += term;
    }
    ll
}

impl Predictor for LinearBinaryModel {
    fn n_features(&self) -> usize {
        self.coefficients.len() - 1
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        self.link.inverse(self.linear_predictor(row))
    }
}

pub fn fit_linear(d: &Dataset, link: Link, cfg: &LinearConfig) -> Result<LinearBinaryModel> {
    LinearBinaryModel::fit(d.features(), d.labels(), link, cfg)
}

/// `{-0.30, -0.25, ..., 0.30}`.
pub fn gev_xi_grid() -> Vec<f64> {
    (-6..=6).map(|k| k as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevSearch {
    pub grid: Vec<f64>,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for GevSearch {
    fn default() -> Self {
        Self {
            grid: gev_xi_grid(),
            validation_fraction: 0.3,
            seed: 0,
        }
    }
}

/// Picks the GEV tail on a seeded holdout by validation AUC (first best
/// grid value wins ties), then refits on all of `d`. Returns the model and
/// the `(xi, auc)` trace; grid points whose fit fails score `-inf`.
pub fn fit_gev_search(
    d: &Dataset,
    search: &GevSearch,
    cfg: &LinearConfig,
) -> Result<(LinearBinaryModel, Vec<(f64, f64)>)> {
    if search.grid.is_empty() {
        return Err(ModelError::InvalidConfig("empty gev grid".into()));
    }
    let split = resampling::holdout(d.n(), search.validation_fraction, search.seed)
        .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    let train = d.subset(&split.subtrain);
    let valid = d.subset(&split.validation);
    let trace: Vec<(f64, f64)> = search
        .grid
        .iter()
        .map(|&xi| {
            let auc = fit_linear(&train, Link::Gev { xi }, cfg)
                .ok()
                .and_then(|m| metrics::auc(&m.predict_rows(valid.features()), valid.labels()).ok())
                .unwrap_or(f64::NEG_INFINITY);
            (xi, auc)
        })
        .collect();
    let best = trace
        .iter()
        .fold(trace[0], |best, &cur| if cur.1 > best.1 { cur } else { best });
    Ok((fit_linear(d, Link::Gev { xi: best.0 }, cfg)?, trace))
}
