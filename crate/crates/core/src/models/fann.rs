//! One-hidden-layer feedforward network:
//! `P(y=1|x) = sigmoid(Σ_m v_m · sigmoid(w_m · z + b_m) + c)` with `z` the
//! standardised input. Trained by seeded mini-batch gradient descent on the
//! mean cross-entropy.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_training, sigmoid, softplus, ModelError, Predictor, Result};
use crate::dataset::Dataset;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FannConfig {
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FannConfig {
    fn default() -> Self {
        Self {
            hidden_size: 16,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardNet {
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    /// `hidden_size` rows of `p` weights.
    pub hidden_weights: Vec<Vec<f64>>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

impl FeedforwardNet {
    /// A network with all parameters zero (predicts 0.5) and identity scaling.
    pub fn zeros(p: usize, hidden: usize) -> Self {
        Self {
            input_mean: vec![0.0; p],
            input_sd: vec![1.0; p],
            hidden_weights: vec![vec![0.0; p]; hidden],
            hidden_bias: vec![0.0; hidden],
            output_weights: vec![0.0; hidden],
            output_bias: 0.0,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_bias.len()
    }

    fn standardize(&self, row: ArrayView1<'_, f64>, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (row[j] - self.input_mean[j]) / self.input_sd[j];
        }
    }

    /// Output pre-activation and hidden activations for a standardised row.
    fn forward(&self, z: &[f64], act: &mut [f64]) -> f64 {
        let mut s = self.output_bias;
        for (m, a) in act.iter_mut().enumerate() {
            let pre = self.hidden_bias[m] + self.hidden_weights[m].iter().zip(z).map(|(w, x)| w * x).sum::<f64>();
            *a = sigmoid(pre);
            s += self.output_weights[m] * *a;
        }
        s
    }

    /// Parameters flattened as hidden weights (row-major), hidden biases,
    /// output weights, output bias.
    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.hidden_weights.iter().flatten().copied().collect();
        v.extend(&self.hidden_bias);
        v.extend(&self.output_weights);
        v.push(self.output_bias);
        v
    }

    pub fn set_params(&mut self, v: &[f64]) {
        let p = self.input_mean.len();
        let m = self.hidden_size();
        assert_eq!(v.len(), m * p + 2 * m + 1, "parameter vector length");
        for (r, row) in self.hidden_weights.iter_mut().enumerate() {
            row.copy_from_slice(&v[r * p..(r + 1) * p]);
        }
        self.hidden_bias.copy_from_slice(&v[m * p..m * p + m]);
        self.output_weights.copy_from_slice(&v[m * p + m..m * p + 2 * m]);
        self.output_bias = v[m * p + 2 * m];
    }

    /// Mean cross-entropy over the given rows.
    pub fn loss(&self, rows: ArrayView2<'_, f64>, y: &[u8]) -> f64 {
        self.loss_and_gradient(rows, y).0
    }

    /// Mean cross-entropy and its gradient in [`FeedforwardNet::params`] order.
    pub fn loss_and_gradient(&self, rows: ArrayView2<'_, f64>, y: &[u8]) -> (f64, Vec<f64>) {
        let idx: Vec<usize> = (0..rows.nrows()).collect();
        self.batch_loss_and_gradient(rows, y, &idx)
    }

    fn batch_loss_and_gradient(&self, rows: ArrayView2<'_, f64>, y: &[u8], batch: &[usize]) -> (f64, Vec<f64>) {
        let p = self.input_mean.len();
        let m = self.hidden_size();
        let mut grad = vec![0.0; m * p + 2 * m + 1];
        let mut z = vec![0.0; p];
        let mut act = vec![0.0; m];
        let mut loss = 0.0;
        for &i in batch {
            self.standardize(rows.row(i), &mut z);
            let s = self.forward(&z, &mut act);
            let yi = y[i] as f64;
            loss += softplus(s) - yi * s;
            let delta = sigmoid(s) - yi;
            for k in 0..m {
                grad[m * p + m + k] += delta * act[k];
                let dk = delta * self.output_weights[k] * act[k] * (1.0 - act[k]);
                grad[m * p + k] += dk;
                for (j, zj) in z.iter().enumerate() {
                    grad[k * p + j] += dk * zj;
                }
            }
            grad[m * p + 2 * m] += delta;
        }
        let scale = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, grad)
    }
}

impl Predictor for FeedforwardNet {
    fn n_features(&self) -> usize {
        self.input_mean.len()
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut z = vec![0.0; self.input_mean.len()];
        let mut act = vec![0.0; self.hidden_size()];
        self.standardize(row, &mut z);
        sigmoid(self.forward(&z, &mut act))
    }

    fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut z = vec![0.0; self.input_mean.len()];
        let mut act = vec![0.0; self.hidden_size()];
        rows.outer_iter()
            .map(|r| {
                self.standardize(r, &mut z);
                sigmoid(self.forward(&z, &mut act))
            })
            .collect()
    }
}

pub fn fit_fann(d: &Dataset, cfg: &FannConfig) -> Result<FeedforwardNet> {
    fit_fann_matrix(d.features(), d.labels(), cfg)
}

pub(crate) fn fit_fann_matrix(x: ArrayView2<'_, f64>, y: &[u8], cfg: &FannConfig) -> Result<FeedforwardNet> {
    if cfg.hidden_size < 1 || cfg.batch_size < 1 {
        return Err(ModelError::InvalidConfig(
            "hidden_size and batch_size must be >= 1".into(),
        ));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(ModelError::InvalidConfig(format!(
            "learning rate {}",
            cfg.learning_rate
        )));
    }
    check_training(x, y)?;
    let (n, p) = x.dim();
    let mut net = FeedforwardNet::zeros(p, cfg.hidden_size);
    for j in 0..p {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        net.input_mean[j] = mean;
        net.input_sd[j] = if sd > 0.0 { sd } else { 1.0 };
    }

    let mut rng = seed::rng(cfg.seed);
    let r_in = 1.0 / (p as f64).sqrt();
    let r_out = 1.0 / (cfg.hidden_size as f64).sqrt();
    for row in &mut net.hidden_weights {
        row.iter_mut().for_each(|w| *w = rng.random_range(-r_in..r_in));
    }
    net.hidden_bias
        .iter_mut()
        .for_each(|b| *b = rng.random_range(-r_in..r_in));
    net.output_weights
        .iter_mut()
        .for_each(|w| *w = rng.random_range(-r_out..r_out));
    net.output_bias = rng.random_range(-r_out..r_out);

    let mut order: Vec<usize> = (0..n).collect();
    let mut params = net.params();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = net.batch_loss_and_gradient(x, y, batch);
            epoch_loss += loss * batch.len() as f64;
            for (w, g) in params.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
            net.set_params(&params);
        }
        if !epoch_loss.is_finite() || params.iter().any(|w| !w.is_finite()) {
            return Err(ModelError::Divergence { epoch });
        }
    }
    Ok(net)
}
