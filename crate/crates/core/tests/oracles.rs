//! Simulation oracles with known ground truth.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use sme_risk::dataset::Dataset;
use sme_risk::interpret::{ale_bootstrap, ale_curve, ale_on_grid, compare_ale_pd, BinGrid};
use sme_risk::models::{fit_linear, FnPredictor, LinearConfig, Link};
use sme_risk::resampling::bootstrap_indices;
use sme_risk::seed;

fn dataset(x: Array2<f64>, y: Vec<u8>) -> Dataset {
    let p = x.ncols();
    Dataset::new(x, y, (0..p).map(|j| format!("x{j}")).collect()).unwrap()
}

fn uniform(n: usize, p: usize, s: u64) -> Dataset {
    let mut rng = seed::rng(s);
    let x = Array2::from_shape_fn((n, p), |_| rng.random::<f64>());
    dataset(x, (0..n).map(|i| (i % 2) as u8).collect())
}

#[test]
fn bootstrap_keeps_about_63_percent_distinct_rows() {
    let n = 5000;
    let reps = bootstrap_indices(n, 200, 3).unwrap();
    let mean = reps
        .iter()
        .map(|r| r.iter().collect::<HashSet<_>>().len() as f64 / n as f64)
        .sum::<f64>()
        / reps.len() as f64;
    let expected = 1.0 - (-1.0f64).exp();
    // Per-replicate sd is about 0.0068; the mean of 200 is far tighter.
    assert!((mean - expected).abs() < 0.002, "{mean}");
}

#[test]
fn logit_recovers_the_generating_coefficients() {
    let n = 50_000;
    let beta = [0.5, -1.2];
    let mut rng = seed::rng(8);
    let x = Array2::from_shape_fn((n, 1), |_| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<u8> = (0..n)
        .map(|i| u8::from(rng.random::<f64>() < Link::Logit.inverse(beta[0] + beta[1] * x[[i, 0]])))
        .collect();
    let m = fit_linear(&dataset(x, y), Link::Logit, &LinearConfig::default()).unwrap();
    for (b, t) in m.coefficients.iter().zip(beta) {
        assert!((b - t).abs() < 0.05, "{:?}", m.coefficients);
    }
}

#[test]
fn linear_ale_slope_at_large_n() {
    let d = uniform(100_000, 2, 1);
    let f = FnPredictor::new(2, |x: ArrayView1<'_, f64>| 2.0 * x[0]);
    for k in [1, 7, 40] {
        let c = ale_curve(&f, &d, 0, k).unwrap();
        let mids = c.midpoints();
        if mids.len() > 1 {
            let slope = (c.effects[mids.len() - 1] - c.effects[0]) / (mids[mids.len() - 1] - mids[0]);
            assert!((slope - 2.0).abs() < 1e-6, "{slope}");
        }
    }
}

/// Per-bin bootstrap standard deviation of the ALE on the curve's own grid.
fn bootstrap_se(
    f: &FnPredictor<impl Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync>,
    d: &Dataset,
    grid: &BinGrid,
) -> Vec<f64> {
    let reps: Vec<Vec<f64>> = bootstrap_indices(d.n(), 200, 11)
        .unwrap()
        .iter()
        .map(|rows| ale_on_grid(f, d.features(), rows, 0, grid).0)
        .collect();
    (0..grid.bins())
        .map(|k| {
            let m = reps.iter().map(|r| r[k]).sum::<f64>() / reps.len() as f64;
            (reps.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt()
        })
        .collect()
}

#[test]
fn product_with_independent_zero_mean_factor_has_flat_ale() {
    let n = 10_000;
    let mut rng = seed::rng(21);
    let x = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(StandardNormal));
    let d = dataset(x, vec![0; n]);
    let f = FnPredictor::new(2, |x: ArrayView1<'_, f64>| x[0] * x[1]);
    let c = ale_curve(&f, &d, 0, 20).unwrap();
    let grid = BinGrid {
        boundaries: c.boundaries.clone(),
        requested: 20,
        reduced: false,
    };
    let se = bootstrap_se(&f, &d, &grid);
    for (k, (e, s)) in c.effects.iter().zip(&se).enumerate() {
        assert!(e.abs() <= 3.0 * s, "bin {k}: {e} vs se {s}");
    }
}

#[test]
fn bootstrap_band_covers_the_analytic_linear_ale() {
    let n = 10_000;
    let d = uniform(n, 2, 5);
    let f = FnPredictor::new(2, |x: ArrayView1<'_, f64>| 1.5 * x[0] - x[1]);
    let c = ale_bootstrap(&f, &d, 0, 20, 200, (0.05, 0.95), 9).unwrap();
    let mids = c.midpoints();
    // Population bin masses of U(0, 1); the end bins extend to 0 and 1.
    let z = &c.boundaries;
    let last = z.len() - 1;
    let mass: Vec<f64> = (0..c.bins())
        .map(|k| {
            let lo = if k == 0 { 0.0 } else { z[k] };
            let hi = if k + 1 == last { 1.0 } else { z[k + 1] };
            hi - lo
        })
        .collect();
    let centre: f64 = mids.iter().zip(&mass).map(|(m, w)| m * w).sum();
    let truth: Vec<f64> = mids.iter().map(|m| 1.5 * (m - centre)).collect();
    let (lo, hi) = (c.lower.as_ref().unwrap(), c.upper.as_ref().unwrap());
    let covered = (0..c.bins())
        .filter(|&k| lo[k] <= truth[k] && truth[k] <= hi[k])
        .count();
    assert!(covered as f64 >= 0.85 * c.bins() as f64, "{covered}/{}", c.bins());
}

#[test]
fn ale_and_pd_agree_under_independence_and_split_under_collinearity() {
    let n = 10_000;
    let mut rng = seed::rng(4);
    let indep = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(StandardNormal));
    let f = FnPredictor::new(2, |x: ArrayView1<'_, f64>| x[0] * x[1]);
    let cmp = compare_ale_pd(&f, &dataset(indep.clone(), vec![0; n]), 0, 20, 200, 1).unwrap();
    assert!(cmp.max_z() <= 3.0, "{}", cmp.max_z());

    let mut same = indep;
    for i in 0..n {
        same[[i, 1]] = same[[i, 0]];
    }
    let cmp = compare_ale_pd(&f, &dataset(same, vec![0; n]), 0, 20, 200, 1).unwrap();
    assert!(cmp.max_z() > 5.0, "{}", cmp.max_z());
}
