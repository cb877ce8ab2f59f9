//! Shapley attributions with value function
//! `v(S) = mean_b f(x_S, b_-S)` over background rows `b`.
//!
//! Exact mode evaluates all `2^p` coalitions; sampling mode averages marginal
//! contributions along seeded random permutations.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{InterpretError, Result};
use crate::dataset::Dataset;
use crate::models::Predictor;
use crate::seed;

pub const MAX_EXACT_FEATURES: usize = 25;
const MAX_SAMPLING_FEATURES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShapleyMode {
    Exact,
    Sampling {
        permutations: usize,
    },
    /// Exact up to `exact_max_features`, sampling beyond.
    Auto {
        exact_max_features: usize,
        permutations: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub mode: ShapleyMode,
    pub seed: u64,
    /// Rows explained by [`global_shapley`].
    pub instances: usize,
    pub background: usize,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self {
            mode: ShapleyMode::Auto {
                exact_max_features: 12,
                permutations: 200,
            },
            seed: 0,
            instances: 1000,
            background: 100,
        }
    }
}

/// Value function over coalitions encoded as bit masks.
struct Game<'a, P: ?Sized> {
    model: &'a P,
    background: ArrayView2<'a, f64>,
    x: ArrayView1<'a, f64>,
    scratch: Array2<f64>,
}

impl<'a, P: Predictor + ?Sized> Game<'a, P> {
    fn new(model: &'a P, background: ArrayView2<'a, f64>, x: ArrayView1<'a, f64>) -> Self {
        Self {
            model,
            background,
            x,
            scratch: background.to_owned(),
        }
    }

    fn value(&mut self, mask: u64) -> f64 {
        self.scratch.assign(&self.background);
        for j in 0..self.x.len() {
            if mask >> j & 1 == 1 {
                self.scratch.column_mut(j).fill(self.x[j]);
            }
        }
        let preds = self.model.predict_rows(self.scratch.view());
        preds.iter().sum::<f64>() / preds.len() as f64
    }
}

fn check<P: Predictor + ?Sized>(model: &P, background: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> Result<usize> {
    if background.nrows() == 0 {
        return Err(InterpretError::EmptyData);
    }
    let p = model.n_features();
    for got in [background.ncols(), x.len()] {
        if got != p {
            return Err(InterpretError::WidthMismatch { expected: p, got });
        }
    }
    Ok(p)
}

/// Exact Shapley values by enumeration, plus `v(∅)`.
pub fn shapley_exact<P: Predictor + ?Sized>(
    model: &P,
    background: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
) -> Result<(Vec<f64>, f64)> {
    let p = check(model, background, x)?;
    if p > MAX_EXACT_FEATURES {
        return Err(InterpretError::TooManyFeatures {
            p,
            max: MAX_EXACT_FEATURES,
        });
    }
    let mut game = Game::new(model, background, x);
    let v: Vec<f64> = (0..1u64 << p).map(|m| game.value(m)).collect();
    // weight[s] = s! (p - s - 1)! / p!
    let mut weight = vec![0.0; p.max(1)];
    for (s, w) in weight.iter_mut().enumerate().take(p) {
        *w = 1.0 / (p as f64 * binomial(p - 1, s));
    }
    let mut phi = vec![0.0; p];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        let bit = 1u64 << j;
        let mut acc = 0.0;
        for mask in 0..1u64 << p {
            if mask & bit == 0 {
                acc += weight[mask.count_ones() as usize] * (v[(mask | bit) as usize] - v[mask as usize]);
            }
        }
        *phi_j = acc;
    }
    Ok((phi, v[0]))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Monte Carlo Shapley values from `permutations` seeded orderings, plus `v(∅)`.
pub fn shapley_sampling<P: Predictor + ?Sized>(
    model: &P,
    background: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    permutations: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let p = check(model, background, x)?;
    if permutations == 0 {
        return Err(InterpretError::InvalidPermutations);
    }
    if p > MAX_SAMPLING_FEATURES {
        return Err(InterpretError::TooManyFeatures {
            p,
            max: MAX_SAMPLING_FEATURES,
        });
    }
    let mut game = Game::new(model, background, x);
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut value = |mask: u64, game: &mut Game<'_, P>| *cache.entry(mask).or_insert_with(|| game.value(mask));
    let empty = value(0, &mut game);
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..p).collect();
    let mut phi = vec![0.0; p];
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        let mut mask = 0u64;
        let mut prev = empty;
        for &j in &order {
            mask |= 1 << j;
            let cur = value(mask, &mut game);
            phi[j] += cur - prev;
            prev = cur;
        }
    }
    phi.iter_mut().for_each(|v| *v /= permutations as f64);
    Ok((phi, empty))
}

/// Attribution of `x` under `config.mode`; sampling uses `config.seed`.
pub fn shapley_instance<P: Predictor + ?Sized>(
    model: &P,
    background: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    config: &ShapleyConfig,
) -> Result<Vec<f64>> {
    Ok(instance_with_seed(model, background, x, config.mode, config.seed)?.0)
}

fn instance_with_seed<P: Predictor + ?Sized>(
    model: &P,
    background: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    mode: ShapleyMode,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    match mode {
        ShapleyMode::Exact => shapley_exact(model, background, x),
        ShapleyMode::Sampling { permutations } => shapley_sampling(model, background, x, permutations, seed),
        ShapleyMode::Auto {
            exact_max_features,
            permutations,
        } => {
            if model.n_features() <= exact_max_features.min(MAX_EXACT_FEATURES) {
                shapley_exact(model, background, x)
            } else {
                shapley_sampling(model, background, x, permutations, seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleySummary {
    pub feature_names: Vec<String>,
    /// Rows of the dataset that were explained, in order.
    pub instances: Vec<usize>,
    pub background_rows: Vec<usize>,
    /// One attribution vector per explained row.
    pub phi: Vec<Vec<f64>>,
    /// Mean prediction over the background rows.
    pub baseline: f64,
    /// Mean `|φ|` per feature, in feature order.
    pub importance: Vec<f64>,
    /// Feature indices by decreasing importance, ties by index.
    pub ranking: Vec<usize>,
}

impl ShapleySummary {
    /// Plot data in rank order.
    pub fn ranked(&self) -> Vec<Importance> {
        self.ranking
            .iter()
            .map(|&j| Importance {
                feature: self.feature_names[j].clone(),
                importance: self.importance[j],
            })
            .collect()
    }
}

/// Sorted sample of `min(k, n)` rows without replacement (all rows if `k >= n`).
fn sample_rows(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut v = index::sample(&mut seed::rng(seed), n, k).into_vec();
    v.sort_unstable();
    v
}

/// Attributions for a seeded subsample of `d` against a seeded background
/// subsample of `d`, and the global mean-|φ| ranking.
pub fn global_shapley<P: Predictor + ?Sized>(model: &P, d: &Dataset, config: &ShapleyConfig) -> Result<ShapleySummary> {
    if config.instances == 0 || config.background == 0 {
        return Err(InterpretError::EmptyData);
    }
    let instances = sample_rows(d.n(), config.instances, seed::derive(config.seed, &[1]));
    let background_rows = sample_rows(d.n(), config.background, seed::derive(config.seed, &[2]));
    let background = d.features().select(ndarray::Axis(0), &background_rows);

    let results: Vec<(Vec<f64>, f64)> = instances
        .par_iter()
        .map(|&i| {
            instance_with_seed(
                model,
                background.view(),
                d.row(i),
                config.mode,
                seed::derive(config.seed, &[3, i as u64]),
            )
        })
        .collect::<Result<_>>()?;

    let p = d.p();
    let baseline = results.first().map_or(0.0, |r| r.1);
    let phi: Vec<Vec<f64>> = results.into_iter().map(|r| r.0).collect();
    let mut importance = vec![0.0; p];
    for row in &phi {
        for (imp, v) in importance.iter_mut().zip(row) {
            *imp += v.abs();
        }
    }
    importance.iter_mut().for_each(|v| *v /= phi.len() as f64);
    let mut ranking: Vec<usize> = (0..p).collect();
    ranking.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));

    Ok(ShapleySummary {
        feature_names: d.feature_names().to_vec(),
        instances,
        background_rows,
        phi,
        baseline,
        importance,
        ranking,
    })
}
