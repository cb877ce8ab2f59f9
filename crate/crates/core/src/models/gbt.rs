//! Second-order gradient boosting of regression trees on the logistic loss.
//!
//! Each round fits a tree to per-row gradients `g = p - y` and hessians
//! `h = p (1 - p)` with exact greedy splits scored by
//! `G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ)`; leaves take `-G/(H+λ)`.
//! A tree is a set of non-overlapping leaf regions, so every row reaches
//! exactly one leaf. A node splits on its best candidate whenever one
//! satisfies `min_child_weight`, even at zero gain. If a round would raise
//! the training loss its leaf weights are halved until it does not.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_training, sigmoid, softplus, ModelError, Predictor, Result};
use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub min_child_weight: f64,
    /// Initial log-odds; defaults to the training log-odds.
    #[serde(default)]
    pub base_score: Option<f64>,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            l2: 1.0,
            min_child_weight: 1.0,
            base_score: None,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(ModelError::InvalidConfig("max_depth must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(ModelError::InvalidConfig(format!("l2 {} < 0", self.l2)));
        }
        if self.min_child_weight.is_nan() || self.min_child_weight < 0.0 {
            return Err(ModelError::InvalidConfig("min_child_weight < 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, row: ArrayView1<'_, f64>) -> usize {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[feature] <= threshold { left } else { right },
                Node::Leaf { .. } => return k,
            }
        }
    }

    pub fn predict(&self, row: ArrayView1<'_, f64>) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match t.nodes[k] {
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&k| matches!(self.nodes[k], Node::Leaf { .. }))
            .collect()
    }

    fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { weight } = node {
                *weight *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub n_features: usize,
    /// Mean training log-loss before boosting and after each round.
    pub train_loss: Vec<f64>,
}

impl TreeEnsemble {
    /// Ensemble that predicts `sigmoid(base_score)` everywhere.
    pub fn constant(n_features: usize, base_score: f64) -> Self {
        Self {
            trees: Vec::new(),
            learning_rate: 1.0,
            base_score,
            n_features,
            train_loss: Vec::new(),
        }
    }

    pub fn margin(&self, row: ArrayView1<'_, f64>) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }
}

impl Predictor for TreeEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.margin(row))
    }
}

pub fn leaf_weight(g: f64, h: f64, l2: f64) -> f64 {
    if h + l2 > 0.0 {
        -g / (h + l2)
    } else {
        0.0
    }
}

fn score(g: f64, h: f64, l2: f64) -> f64 {
    if h + l2 > 0.0 {
        g * g / (h + l2)
    } else {
        0.0
    }
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbtConfig,
    nodes: Vec<Node>,
    /// Leaf node reached by each training row.
    leaf_of: Vec<usize>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weight: leaf_weight(g, h, self.cfg.l2),
        });
        if depth >= self.cfg.max_depth || rows.len() < 2 {
            rows.iter().for_each(|&i| self.leaf_of[i] = id);
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, g, h) else {
            rows.iter().for_each(|&i| self.leaf_of[i] = id);
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[[i, feature]] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[usize], g: f64, h: f64) -> Option<(usize, f64)> {
        let l2 = self.cfg.l2;
        let parent = score(g, h, l2);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.to_vec();
        for f in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..order.len() - 1 {
                let i = order[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let lo = self.x[[i, f]];
                let hi = self.x[[order[w + 1], f]];
                if lo == hi {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (score(gl, hl, l2) + score(gr, hr, l2) - parent);
                // Zero-gain splits are allowed so symmetric problems such as
                // XOR can be split one level further down.
                let better = match best {
                    None => gain >= -1e-12,
                    Some((b, _, _)) => gain > b,
                };
                if better {
                    let mut t = lo + (hi - lo) / 2.0;
                    if t >= hi {
                        t = lo;
                    }
                    best = Some((gain, f, t));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn mean_log_loss(margin: &[f64], y: &[f64]) -> f64 {
    margin.iter().zip(y).map(|(&m, &yi)| softplus(m) - yi * m).sum::<f64>() / margin.len() as f64
}

pub fn fit_gbt(d: &Dataset, cfg: &GbtConfig) -> Result<TreeEnsemble> {
    fit_gbt_matrix(d.features(), d.labels(), cfg)
}

pub(crate) fn fit_gbt_matrix(x: ArrayView2<'_, f64>, y: &[u8], cfg: &GbtConfig) -> Result<TreeEnsemble> {
    cfg.validate()?;
    if x.nrows() < 2 {
        return Err(ModelError::InvalidConfig("need at least two rows".into()));
    }
    check_training(x, y)?;
    let n = x.nrows();
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let base_score = cfg.base_score.unwrap_or_else(|| {
        let p = (yf.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
        (p / (1.0 - p)).ln()
    });

    let mut margin = vec![base_score; n];
    let mut loss = mean_log_loss(&margin, &yf);
    let mut train_loss = vec![loss];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..cfg.n_trees {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - yf[i];
            hess[i] = p * (1.0 - p);
        }
        let mut grower = Grower {
            x,
            grad: &grad,
            hess: &hess,
            cfg,
            nodes: Vec::new(),
            leaf_of: vec![0; n],
        };
        grower.grow((0..n).collect(), 0);
        let leaf_of = grower.leaf_of;
        let mut tree = Tree { nodes: grower.nodes };

        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = (0..n)
                .map(|i| match tree.nodes[leaf_of[i]] {
                    Node::Leaf { weight } => margin[i] + cfg.learning_rate * weight * factor,
                    Node::Split { .. } => unreachable!(),
                })
                .collect();
            let cand_loss = mean_log_loss(&cand, &yf);
            if cand_loss <= loss {
                accepted = Some((cand, cand_loss));
                break;
            }
            factor *= 0.5;
        }
        match accepted {
            Some((cand, cand_loss)) => {
                tree.scale_leaves(factor);
                margin = cand;
                loss = cand_loss;
            }
            None => tree.scale_leaves(0.0),
        }
        train_loss.push(loss);
        trees.push(tree);
    }
    Ok(TreeEnsemble {
        trees,
        learning_rate: cfg.learning_rate,
        base_score,
        n_features: x.ncols(),
        train_loss,
    })
}
