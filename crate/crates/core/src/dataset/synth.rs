//! Moment-calibrated synthetic firms.
//!
//! Labels are drawn first (Bernoulli at the target default rate); every
//! feature is then drawn from a class-conditional distribution whose shape
//! is set by [`LabelMechanism`] and whose sample mean is pinned to the target
//! class mean. The class-conditional shapes act as the label mechanism: the
//! log density ratio between failed and survived firms is what a model has
//! to learn, and it carries a jump at zero profit margin, lower solvency,
//! cash flow and sales for defaults and a higher ROCE.
//!
//! Shapes:
//! - `Gaussian`: exactly standardised normal draws, so the sample mean and
//!   sd equal the targets.
//! - `LogNormal`: moment-parameterised log-normal rescaled to the exact
//!   target mean; the three size variables share a latent size factor.
//! - `HeavyTail`: a normal body with a class-common spread plus a small
//!   tail whose values are solved so that class mean and sd are exact.
//! - `Step`: a sign mixture `±|N(0, scale²)|` whose negative share differs
//!   by class, plus the calibrated tail. The class density ratio is flat on
//!   each side of zero and jumps at zero.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::moments::FeatureMoments;
use super::{ClassMoments, Dataset, DatasetError, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Gaussian,
    LogNormal {
        size_factor: bool,
    },
    HeavyTail {
        body_sd: f64,
    },
    Step {
        negative_share_survived: f64,
        negative_share_failed: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShape {
    pub name: String,
    #[serde(flatten)]
    pub kind: ShapeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMechanism {
    /// Share of each class drawn from the calibrated tail.
    pub tail_fraction: f64,
    /// Correlation of the log size variables within a class.
    pub size_correlation: f64,
    /// Features not listed here are Gaussian.
    pub shapes: Vec<FeatureShape>,
}

impl Default for LabelMechanism {
    fn default() -> Self {
        let shape = |name: &str, kind| FeatureShape {
            name: name.to_string(),
            kind,
        };
        Self {
            tail_fraction: 0.05,
            size_correlation: 0.6,
            shapes: vec![
                shape("cash_flow", ShapeKind::HeavyTail { body_sd: 600.0 }),
                shape("gearing_ratio", ShapeKind::LogNormal { size_factor: false }),
                shape("employees", ShapeKind::LogNormal { size_factor: true }),
                shape(
                    "profit_margin",
                    ShapeKind::Step {
                        negative_share_survived: 0.15,
                        negative_share_failed: 0.85,
                        scale: 15.0,
                    },
                ),
                shape("roce", ShapeKind::HeavyTail { body_sd: 100.0 }),
                shape("roe", ShapeKind::HeavyTail { body_sd: 60.0 }),
                shape("sales", ShapeKind::LogNormal { size_factor: true }),
                shape("solvency_ratio", ShapeKind::Gaussian),
                shape("total_assets", ShapeKind::LogNormal { size_factor: true }),
            ],
        }
    }
}

impl LabelMechanism {
    fn kind_of(&self, name: &str) -> &ShapeKind {
        self.shapes
            .iter()
            .find(|s| s.name == name)
            .map(|s| &s.kind)
            .unwrap_or(&ShapeKind::Gaussian)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DatasetError::InvalidMoments(m));
        if !(0.0..1.0).contains(&self.tail_fraction) {
            return bad(format!("tail fraction {}", self.tail_fraction));
        }
        if !(0.0..=1.0).contains(&self.size_correlation) {
            return bad(format!("size correlation {}", self.size_correlation));
        }
        for s in &self.shapes {
            match s.kind {
                ShapeKind::HeavyTail { body_sd } if body_sd.is_nan() || body_sd < 0.0 => {
                    return bad(format!("body sd for {}", s.name))
                }
                ShapeKind::Step {
                    negative_share_survived: a,
                    negative_share_failed: b,
                    scale,
                } if !((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && scale >= 0.0) => {
                    return bad(format!("step parameters for {}", s.name))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Subtracts the sample mean and divides by the population sd (if nonzero).
fn standardize(z: &mut [f64]) {
    let n = z.len() as f64;
    if z.is_empty() {
        return;
    }
    let mean = z.iter().sum::<f64>() / n;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in z.iter_mut() {
        *v -= mean;
        if sd > 0.0 {
            *v /= sd;
        }
    }
}

fn normals(rng: &mut seed::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn tail_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).max(n.min(2)).min(n)
}

/// Appends `n_tail` values so the whole vector has exactly the target mean,
/// and the target (population) sd whenever the body leaves room for it.
fn calibrated_tail(body: &mut Vec<f64>, n_tail: usize, mean: f64, sd: f64, rng: &mut seed::Rng) {
    if n_tail == 0 {
        return;
    }
    let n = (body.len() + n_tail) as f64;
    let sum_b: f64 = body.iter().sum();
    let sq_b: f64 = body.iter().map(|v| v * v).sum();
    let tail_mean = (n * mean - sum_b) / n_tail as f64;
    let tail_var = ((n * (sd * sd + mean * mean) - sq_b) / n_tail as f64 - tail_mean * tail_mean).max(0.0);
    let mut z = normals(rng, n_tail);
    standardize(&mut z);
    body.extend(z.iter().map(|v| tail_mean + tail_var.sqrt() * v));
}

fn class_values(
    kind: &ShapeKind,
    mean: f64,
    sd: f64,
    class: u8,
    size: &[f64],
    mech: &LabelMechanism,
    rng: &mut seed::Rng,
) -> Vec<f64> {
    let n = size.len();
    if n == 0 {
        return Vec::new();
    }
    if sd == 0.0 {
        return vec![mean; n];
    }
    match *kind {
        ShapeKind::LogNormal { size_factor } if mean > 0.0 => {
            let s2 = (1.0 + (sd / mean).powi(2)).ln();
            let mu = mean.ln() - s2 / 2.0;
            let r = if size_factor { mech.size_correlation } else { 0.0 };
            let mut v: Vec<f64> = size
                .iter()
                .map(|u| {
                    let e: f64 = rng.sample(StandardNormal);
                    let z = r.sqrt() * u + (1.0 - r).sqrt() * e;
                    (mu + s2.sqrt() * z).exp()
                })
                .collect();
            let scale = mean / (v.iter().sum::<f64>() / n as f64);
            v.iter_mut().for_each(|x| *x *= scale);
            v
        }
        ShapeKind::HeavyTail { body_sd } => {
            let n_tail = tail_count(n, mech.tail_fraction);
            let mut v: Vec<f64> = (0..n - n_tail)
                .map(|_| mean + body_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            calibrated_tail(&mut v, n_tail, mean, sd, rng);
            v.shuffle(rng);
            v
        }
        ShapeKind::Step {
            negative_share_survived,
            negative_share_failed,
            scale,
        } => {
            let q = if class == 1 {
                negative_share_failed
            } else {
                negative_share_survived
            };
            let n_tail = tail_count(n, mech.tail_fraction);
            let mut v: Vec<f64> = (0..n - n_tail)
                .map(|_| {
                    let m = scale * rng.sample::<f64, _>(StandardNormal).abs();
                    if rng.random::<f64>() < q {
                        -m
                    } else {
                        m
                    }
                })
                .collect();
            calibrated_tail(&mut v, n_tail, mean, sd, rng);
            v.shuffle(rng);
            v
        }
        _ => {
            let mut z = normals(rng, n);
            standardize(&mut z);
            z.iter().map(|v| mean + sd * v).collect()
        }
    }
}

/// Draws `n` synthetic firms whose class-conditional feature means match
/// `moments` and whose default count is Binomial(n, default_rate).
/// Bit-reproducible for a fixed seed.
pub fn synthesize_firms(moments: &ClassMoments, n: usize, seed: u64, mechanism: &LabelMechanism) -> Result<Dataset> {
    moments.validate()?;
    mechanism.validate()?;
    if n < 100 {
        return Err(DatasetError::Invalid(format!(
            "synthesize_firms needs n >= 100, got {n}"
        )));
    }
    let mut label_rng = seed::rng(seed::derive(seed, &[0]));
    let labels: Vec<u8> = (0..n)
        .map(|_| u8::from(label_rng.random::<f64>() < moments.default_rate))
        .collect();

    let p = moments.features.len();
    let mut x = Array2::<f64>::zeros((n, p));
    for class in [0u8, 1] {
        let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let mut size_rng = seed::rng(seed::derive(seed, &[1, class as u64]));
        let size = normals(&mut size_rng, rows.len());
        for (
            j,
            FeatureMoments {
                name,
                survived_mean,
                survived_sd,
                failed_mean,
                failed_sd,
            },
        ) in moments.features.iter().enumerate()
        {
            let (mean, sd) = if class == 1 {
                (*failed_mean, *failed_sd)
            } else {
                (*survived_mean, *survived_sd)
            };
            let mut rng = seed::rng(seed::derive(seed, &[2, class as u64, j as u64]));
            let vals = class_values(mechanism.kind_of(name), mean, sd, class, &size, mechanism, &mut rng);
            for (&i, v) in rows.iter().zip(vals) {
                x[[i, j]] = v;
            }
        }
    }
    let names = moments.features.iter().map(|f| f.name.clone()).collect();
    Dataset::new(x, labels, names)
}
