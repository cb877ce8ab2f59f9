//! Partial dependence: the mean prediction with one feature forced to each
//! grid value, centred so it can be laid over an ALE curve.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ale::{ale_on_grid, AleCurve, BinGrid};
use super::{check_inputs, InterpretError, Result};
use crate::dataset::Dataset;
use crate::models::Predictor;
use crate::resampling::bootstrap_replicate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdCurve {
    pub feature: usize,
    pub feature_name: String,
    pub grid: Vec<f64>,
    /// Mean prediction at each grid value.
    pub raw: Vec<f64>,
    /// `raw` minus its data-weighted mean.
    pub centred: Vec<f64>,
}

/// Mean of `f(row with x_S = v)` over `rows`, for every `v` in `values`.
fn raw_pd<P: Predictor + ?Sized>(
    model: &P,
    x: ArrayView2<'_, f64>,
    rows: &[usize],
    feature: usize,
    values: &[f64],
) -> Vec<f64> {
    let base = x.select(ndarray::Axis(0), rows);
    values
        .par_iter()
        .map(|&v| {
            let mut m = base.clone();
            m.column_mut(feature).fill(v);
            model.predict_rows(m.view()).iter().sum::<f64>() / rows.len() as f64
        })
        .collect()
}

/// Piecewise-linear interpolation of `(grid, values)` at `v`, flat outside.
fn interpolate(grid: &[f64], values: &[f64], v: f64) -> f64 {
    let i = grid.partition_point(|&g| g < v);
    if i == 0 {
        return values[0];
    }
    if i == grid.len() {
        return values[grid.len() - 1];
    }
    let (g0, g1) = (grid[i - 1], grid[i]);
    if g1 == g0 {
        return values[i];
    }
    let t = (v - g0) / (g1 - g0);
    values[i - 1] + t * (values[i] - values[i - 1])
}

/// PD on `grid`, centred by its mean over the observed feature values
/// (each row contributes the curve interpolated at its own value).
pub fn pd_curve<P: Predictor + ?Sized>(model: &P, d: &Dataset, feature: usize, grid: &[f64]) -> Result<PdCurve> {
    check_inputs(model, d, feature)?;
    if grid.is_empty() || grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(InterpretError::InvalidGrid);
    }
    let rows: Vec<usize> = (0..d.n()).collect();
    let raw = raw_pd(model, d.features(), &rows, feature, grid);
    let mean = d
        .column(feature)
        .iter()
        .map(|&v| interpolate(grid, &raw, v))
        .sum::<f64>()
        / d.n() as f64;
    let centred = raw.iter().map(|r| r - mean).collect();
    Ok(PdCurve {
        feature,
        feature_name: d.feature_names()[feature].clone(),
        grid: grid.to_vec(),
        raw,
        centred,
    })
}

/// PD summarised on ALE bins: the boundary values are averaged per bin
/// exactly as ALE does and centred with the same counts, so for a model
/// additive in the feature the result equals the ALE effects.
fn pd_bins<P: Predictor + ?Sized>(
    model: &P,
    x: ArrayView2<'_, f64>,
    rows: &[usize],
    feature: usize,
    boundaries: &[f64],
    counts: &[usize],
) -> Vec<f64> {
    let raw = raw_pd(model, x, rows, feature, boundaries);
    let u: Vec<f64> = raw.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let n: usize = counts.iter().sum();
    let mean = u.iter().zip(counts).map(|(v, &c)| v * c as f64).sum::<f64>() / n as f64;
    u.into_iter().map(|v| v - mean).collect()
}

pub fn pd_on_ale_grid<P: Predictor + ?Sized>(model: &P, d: &Dataset, curve: &AleCurve) -> Result<Vec<f64>> {
    check_inputs(model, d, curve.feature)?;
    let rows: Vec<usize> = (0..d.n()).collect();
    Ok(pd_bins(
        model,
        d.features(),
        &rows,
        curve.feature,
        &curve.boundaries,
        &curve.counts,
    ))
}

/// ALE and PD on the same bins with bootstrap standard errors of their
/// per-bin difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlePdComparison {
    pub ale: AleCurve,
    pub pd: Vec<f64>,
    pub se: Vec<f64>,
}

impl AlePdComparison {
    /// `|ALE - PD| / se` per bin; a zero difference with zero se gives 0.
    pub fn z_scores(&self) -> Vec<f64> {
        self.ale
            .effects
            .iter()
            .zip(&self.pd)
            .zip(&self.se)
            .map(|((a, p), &s)| {
                let gap = (a - p).abs();
                if gap <= 1e-12 {
                    0.0
                } else {
                    gap / s
                }
            })
            .collect()
    }

    pub fn max_z(&self) -> f64 {
        self.z_scores().into_iter().fold(0.0, f64::max)
    }
}

pub fn compare_ale_pd<P: Predictor + ?Sized>(
    model: &P,
    d: &Dataset,
    feature: usize,
    k: usize,
    replicates: usize,
    seed: u64,
) -> Result<AlePdComparison> {
    if replicates < 2 {
        return Err(InterpretError::InvalidReplicates(replicates));
    }
    let ale = super::ale_curve(model, d, feature, k)?;
    let pd = pd_on_ale_grid(model, d, &ale)?;
    let grid = BinGrid {
        boundaries: ale.boundaries.clone(),
        requested: ale.requested_bins,
        reduced: ale.reduced_bins,
    };
    let diffs: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let rows = bootstrap_replicate(d.n(), seed.wrapping_add(b as u64));
            let (a, counts) = ale_on_grid(model, d.features(), &rows, feature, &grid);
            let p = pd_bins(model, d.features(), &rows, feature, &grid.boundaries, &counts);
            a.iter().zip(&p).map(|(x, y)| x - y).collect()
        })
        .collect();
    let se = (0..ale.bins())
        .map(|k| {
            let v: Vec<f64> = diffs.iter().map(|r| r[k]).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        })
        .collect();
    Ok(AlePdComparison { ale, pd, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FnPredictor;
    use ndarray::Array2;

    fn two_col(n: usize) -> Dataset {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { i as f64 } else { ((i * 7) % 5) as f64 });
        Dataset::new(x, (0..n).map(|i| (i % 2) as u8).collect(), vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn constant_model_pd_is_zero() {
        let d = two_col(20);
        let c = pd_curve(&FnPredictor::new(2, |_| 0.4), &d, 0, &[0.0, 5.0, 10.0]).unwrap();
        assert!(c.centred.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn linear_pd_hand_example() {
        let d = two_col(3); // a = 0, 1, 2
        let m = FnPredictor::new(2, |r| 3.0 * r[0] + r[1]);
        let c = pd_curve(&m, &d, 0, &[0.0, 2.0]).unwrap();
        assert_eq!(c.raw[1] - c.raw[0], 6.0);
        // Data-weighted mean of 3a is 3.
        assert!((c.centred[0] + 3.0).abs() < 1e-12 && (c.centred[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grid() {
        let d = two_col(5);
        let m = FnPredictor::new(2, |r| r[0]);
        assert_eq!(pd_curve(&m, &d, 0, &[]), Err(InterpretError::InvalidGrid));
        assert_eq!(pd_curve(&m, &d, 0, &[2.0, 1.0]), Err(InterpretError::InvalidGrid));
        assert!(matches!(
            pd_curve(&m, &d, 5, &[1.0]),
            Err(InterpretError::FeatureOutOfRange { .. })
        ));
    }

    #[test]
    fn additive_model_pd_matches_ale_on_its_grid() {
        let d = two_col(200);
        let m = FnPredictor::new(2, |r| (r[0] / 50.0).sin() + r[1] * r[1]);
        let ale = super::super::ale_curve(&m, &d, 0, 8).unwrap();
        let pd = pd_on_ale_grid(&m, &d, &ale).unwrap();
        for (a, p) in ale.effects.iter().zip(&pd) {
            assert!((a - p).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_is_flat_outside() {
        let g = [0.0, 1.0];
        let v = [2.0, 4.0];
        assert_eq!(interpolate(&g, &v, -1.0), 2.0);
        assert_eq!(interpolate(&g, &v, 0.25), 2.5);
        assert_eq!(interpolate(&g, &v, 3.0), 4.0);
    }
}
