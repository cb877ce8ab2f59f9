//! Accumulated local effects.
//!
//! Bins are `(z_{k-1}, z_k]` with the first bin closed; values beyond the grid
//! fall into the end bins. For bin `k` the local effect is the mean of
//! `f(z_k, x_-S) - f(z_{k-1}, x_-S)` over its rows, `acc_k` the running sum
//! (`acc_0 = 0`). A bin is represented by the average of its two boundary
//! values, `(acc_{k-1} + acc_k) / 2`, and the curve is centred so the
//! count-weighted mean of the effects is zero. For a linear `f = b·x_S` this
//! gives `b · (midpoint_k - weighted mean midpoint)`.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_inputs, InterpretError, Result};
use crate::dataset::Dataset;
use crate::models::Predictor;
use crate::resampling::bootstrap_replicate;

const CHUNK: usize = 2048;

/// Bin boundaries for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    /// `z_0 < z_1 < … < z_K`; a constant feature gives `[v, v]`.
    pub boundaries: Vec<f64>,
    pub requested: usize,
    /// Fewer than `requested` bins because of ties.
    pub reduced: bool,
}

impl BinGrid {
    pub fn bins(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_constant(&self) -> bool {
        self.boundaries[0] == self.boundaries[self.bins()]
    }

    /// 0-based bin of `v`: the first `k` with `v <= z_{k+1}`, clamped.
    pub fn bin_of(&self, v: f64) -> usize {
        let k = self.bins();
        let i = self.boundaries.partition_point(|&z| z < v);
        i.clamp(1, k) - 1
    }
}

/// Empirical (inverse-CDF) quantiles at `0, 1/K, …, 1`, deduplicated.
pub fn quantile_grid(values: &[f64], k: usize) -> Result<BinGrid> {
    if k == 0 {
        return Err(InterpretError::InvalidBins);
    }
    if values.is_empty() {
        return Err(InterpretError::EmptyData);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut boundaries = Vec::with_capacity(k + 1);
    boundaries.push(sorted[0]);
    for i in 1..=k {
        let rank = (i * n).div_ceil(k);
        let z = sorted[rank - 1];
        if z > *boundaries.last().unwrap() {
            boundaries.push(z);
        }
    }
    if boundaries.len() == 1 {
        boundaries.push(sorted[0]);
    }
    let reduced = boundaries.len() - 1 < k;
    Ok(BinGrid {
        boundaries,
        requested: k,
        reduced,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature: usize,
    pub feature_name: String,
    /// Bin boundaries in model units (log scale for log-transformed features).
    pub boundaries: Vec<f64>,
    /// Centred effect per bin, in probability units.
    pub effects: Vec<f64>,
    pub counts: Vec<usize>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub requested_bins: usize,
    pub reduced_bins: bool,
    /// Plot x values are shown as `exp(x) - 1`.
    pub log_scale: bool,
}

/// One plotted bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlePoint {
    pub x: f64,
    pub effect: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl AleCurve {
    pub fn bins(&self) -> usize {
        self.effects.len()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `Σ_k (n_k / n) · effect_k`.
    pub fn centering_residual(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        self.effects
            .iter()
            .zip(&self.counts)
            .map(|(e, &c)| e * c as f64)
            .sum::<f64>()
            / n as f64
    }

    /// Plot data, with anti-log x for log-transformed features.
    pub fn points(&self) -> Vec<AlePoint> {
        self.midpoints()
            .into_iter()
            .enumerate()
            .map(|(k, m)| AlePoint {
                x: if self.log_scale { m.exp() - 1.0 } else { m },
                effect: self.effects[k],
                lo: self.lower.as_ref().map(|v| v[k]),
                hi: self.upper.as_ref().map(|v| v[k]),
            })
            .collect()
    }
}

/// Accumulated effect at every boundary of `grid` and per-bin counts, from
/// the rows `rows` of `x`. Empty bins are merged into their left neighbour
/// (the first bin into its right) and the accumulated curve is linearly
/// interpolated back onto the full grid.
fn accumulate<P: Predictor + ?Sized>(
    model: &P,
    x: ArrayView2<'_, f64>,
    rows: &[usize],
    feature: usize,
    grid: &BinGrid,
) -> (Vec<f64>, Vec<usize>) {
    let z = &grid.boundaries;
    let k = grid.bins();
    let bin: Vec<usize> = rows.iter().map(|&i| grid.bin_of(x[[i, feature]])).collect();
    let mut counts = vec![0usize; k];
    for &b in &bin {
        counts[b] += 1;
    }
    if grid.is_constant() || rows.is_empty() {
        return (vec![0.0; k + 1], counts);
    }

    // Kept boundary indices; merged bin j spans (z[kept[j]], z[kept[j+1]]].
    let mut kept: Vec<usize> = (0..=k).collect();
    let mut merged_counts = counts.clone();
    let mut j = 0;
    while j < merged_counts.len() {
        if merged_counts[j] == 0 && merged_counts.len() > 1 {
            if j > 0 {
                kept.remove(j);
                merged_counts.remove(j);
                j -= 1;
            } else {
                kept.remove(1);
                let c = merged_counts.remove(0);
                merged_counts[0] += c;
            }
            continue;
        }
        j += 1;
    }
    let mut merged_of = vec![0usize; k];
    for (m, w) in kept.windows(2).enumerate() {
        merged_of[w[0]..w[1]].iter_mut().for_each(|b| *b = m);
    }

    let p = x.ncols();
    let deltas: Vec<f64> = rows
        .par_chunks(CHUNK)
        .zip(bin.par_chunks(CHUNK))
        .flat_map_iter(|(rs, bs)| {
            let mut lo = Array2::<f64>::zeros((rs.len(), p));
            let mut hi = Array2::<f64>::zeros((rs.len(), p));
            for (r, (&i, &b)) in rs.iter().zip(bs).enumerate() {
                lo.row_mut(r).assign(&x.row(i));
                hi.row_mut(r).assign(&x.row(i));
                let m = merged_of[b];
                lo[[r, feature]] = z[kept[m]];
                hi[[r, feature]] = z[kept[m + 1]];
            }
            let f_lo = model.predict_rows(lo.view());
            let f_hi = model.predict_rows(hi.view());
            f_hi.into_iter().zip(f_lo).map(|(a, b)| a - b).collect::<Vec<_>>()
        })
        .collect();

    let mut sums = vec![0.0; merged_counts.len()];
    for (d, &b) in deltas.iter().zip(&bin) {
        sums[merged_of[b]] += d;
    }
    let mut acc_merged = vec![0.0; kept.len()];
    for m in 0..sums.len() {
        acc_merged[m + 1] = acc_merged[m] + sums[m] / merged_counts[m] as f64;
    }

    let mut acc = vec![0.0; k + 1];
    for (m, w) in kept.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let span = z[b] - z[a];
        for (i, slot) in acc.iter_mut().enumerate().take(b + 1).skip(a) {
            let t = (z[i] - z[a]) / span;
            *slot = acc_merged[m] + t * (acc_merged[m + 1] - acc_merged[m]);
        }
    }
    (acc, counts)
}

/// Per-bin averages of the boundary values, centred with the bin counts.
fn centre(acc: &[f64], counts: &[usize]) -> Vec<f64> {
    let u: Vec<f64> = acc.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0.0; u.len()];
    }
    let mean = u.iter().zip(counts).map(|(v, &c)| v * c as f64).sum::<f64>() / n as f64;
    u.into_iter().map(|v| v - mean).collect()
}

/// Centred ALE effects and counts of `rows` on a fixed grid.
pub fn ale_on_grid<P: Predictor + ?Sized>(
    model: &P,
    x: ArrayView2<'_, f64>,
    rows: &[usize],
    feature: usize,
    grid: &BinGrid,
) -> (Vec<f64>, Vec<usize>) {
    let (acc, counts) = accumulate(model, x, rows, feature, grid);
    (centre(&acc, &counts), counts)
}

pub fn ale_curve<P: Predictor + ?Sized>(model: &P, d: &Dataset, feature: usize, k: usize) -> Result<AleCurve> {
    check_inputs(model, d, feature)?;
    let col = d.column(feature).to_vec();
    let grid = quantile_grid(&col, k)?;
    let rows: Vec<usize> = (0..d.n()).collect();
    let (effects, counts) = ale_on_grid(model, d.features(), &rows, feature, &grid);
    Ok(AleCurve {
        feature,
        feature_name: d.feature_names()[feature].clone(),
        boundaries: grid.boundaries,
        effects,
        counts,
        lower: None,
        upper: None,
        requested_bins: k,
        reduced_bins: grid.reduced,
        log_scale: d.log_transformed()[feature],
    })
}

/// Effects of `replicates` bootstrap resamples on the grid of `curve`;
/// replicate `b` uses seed `seed + b`.
pub(crate) fn replicate_effects<P: Predictor + ?Sized>(
    model: &P,
    d: &Dataset,
    curve: &AleCurve,
    replicates: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let grid = BinGrid {
        boundaries: curve.boundaries.clone(),
        requested: curve.requested_bins,
        reduced: curve.reduced_bins,
    };
    (0..replicates)
        .into_par_iter()
        .map(|b| {
            let rows = bootstrap_replicate(d.n(), seed.wrapping_add(b as u64));
            ale_on_grid(model, d.features(), &rows, curve.feature, &grid).0
        })
        .collect()
}

/// Linear-interpolation sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// ALE with per-bin percentile bands over `replicates` data resamples. The
/// model is not refit. Bands are widened where needed so they always
/// contain the full-data estimate.
pub fn ale_bootstrap<P: Predictor + ?Sized>(
    model: &P,
    d: &Dataset,
    feature: usize,
    k: usize,
    replicates: usize,
    band: (f64, f64),
    seed: u64,
) -> Result<AleCurve> {
    if replicates < 2 {
        return Err(InterpretError::InvalidReplicates(replicates));
    }
    let (qlo, qhi) = band;
    if !(0.0..=1.0).contains(&qlo) || !(0.0..=1.0).contains(&qhi) || qlo >= qhi {
        return Err(InterpretError::InvalidBand { lo: qlo, hi: qhi });
    }
    let mut curve = ale_curve(model, d, feature, k)?;
    let reps = replicate_effects(model, d, &curve, replicates, seed);
    let mut lower = Vec::with_capacity(curve.bins());
    let mut upper = Vec::with_capacity(curve.bins());
    for (b, &est) in curve.effects.iter().enumerate() {
        let mut v: Vec<f64> = reps.iter().map(|r| r[b]).collect();
        v.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&v, qlo).min(est));
        upper.push(quantile_sorted(&v, qhi).max(est));
    }
    curve.lower = Some(lower);
    curve.upper = Some(upper);
    Ok(curve)
}
