//! Classification performance: sensitivity/specificity at a threshold, AUC
//! and the H-measure.
//!
//! Ties count one half everywhere.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("empty input")]
    Empty,
    #[error("labels must be 0/1, found {0}")]
    InvalidLabel(u8),
    #[error("both classes are required")]
    SingleClass,
    #[error("invalid severity distribution Beta({alpha}, {beta})")]
    InvalidSeverity { alpha: f64, beta: f64 },
    #[error("non-finite score")]
    NonFiniteScore,
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

fn check(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(MetricsError::InvalidLabel(bad));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore);
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    (pos, labels.len() - pos)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// TP / (TP + FN); 0 when there are no positives.
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// TN / (TN + FP); 0 when there are no negatives.
    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Predicted positive iff `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion> {
    check(scores, labels)?;
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Mann–Whitney numerator `U = #{s+ > s-} + ½ #{s+ = s-}` and the pair
/// count `n+ · n-`, both exact (multiples of ½ well inside f64 range).
pub fn mann_whitney(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    check(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based midranks of positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += midrank * tied_pos as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok((u, (pos * neg) as f64))
}

pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (u, pairs) = mann_whitney(scores, labels)?;
    Ok(u / pairs)
}

/// Beta severity distribution over the normalised cost `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Severity {
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// `Beta(π1 + 1, π0 + 1)` from the class shares of the scored sample.
    ClassPrior,
}

impl Default for Severity {
    fn default() -> Self {
        Severity::Beta { alpha: 2.0, beta: 2.0 }
    }
}

impl Severity {
    pub fn parameters(self, labels: &[u8]) -> Result<(f64, f64)> {
        let (a, b) = match self {
            Severity::Beta { alpha, beta } => (alpha, beta),
            Severity::ClassPrior => {
                let (pos, _) = class_counts(labels);
                let pi1 = pos as f64 / labels.len().max(1) as f64;
                (pi1 + 1.0, 1.0 - pi1 + 1.0)
            }
        };
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(MetricsError::InvalidSeverity { alpha: a, beta: b });
        }
        Ok((a, b))
    }
}

/// Operating points `(π0·FPR, π1·FNR)` for every distinct threshold, from
/// "everything positive" to "everything negative".
pub fn weighted_error_points(scores: &[f64], labels: &[u8]) -> Vec<(f64, f64)> {
    let n = labels.len() as f64;
    let (pos, neg) = class_counts(labels);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Threshold below all scores: FP = neg, FN = 0.
    let (mut fp, mut fn_) = (neg, 0usize);
    let mut pts = vec![(fp as f64 / n, fn_ as f64 / n)];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                fn_ += 1;
            } else {
                fp -= 1;
            }
        }
        pts.push((fp as f64 / n, fn_ as f64 / n));
        i = j + 1;
    }
    let _ = pos;
    pts
}

/// Lower convex hull of the points, ordered by decreasing first coordinate.
fn lower_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|a, b| a.0 == b.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // Going right-to-left, keep only clockwise turns.
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Minimum expected misclassification loss `L(c) = min_t [c·π0·FPR(t) + (1-c)·π1·FNR(t)]`,
/// integrated against Beta(α, β), relative to the score-free loss
/// `min(c·π0, (1-c)·π1)`: `H = 1 - L / L_max`.
pub fn h_measure(scores: &[f64], labels: &[u8], severity: Severity) -> Result<f64> {
    check(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let (alpha, beta) = severity.parameters(labels)?;
    let n = labels.len() as f64;
    let (pi0, pi1) = (neg as f64 / n, pos as f64 / n);

    // ∫_lo^hi (A·c + B) u(c) dc with u the Beta(α, β) density.
    let mean = alpha / (alpha + beta);
    let cdf = |c: f64| beta_reg(alpha, beta, c.clamp(0.0, 1.0));
    let cdf1 = |c: f64| beta_reg(alpha + 1.0, beta, c.clamp(0.0, 1.0));
    let piece = |a: f64, b: f64, lo: f64, hi: f64| {
        if hi <= lo {
            return 0.0;
        }
        a * mean * (cdf1(hi) - cdf1(lo)) + b * (cdf(hi) - cdf(lo))
    };
    // Line for operating point (x, y): c·x + (1-c)·y = (x - y)·c + y.
    let integrate = |hull: &[(f64, f64)]| {
        let mut total = 0.0;
        let mut lo = 0.0;
        for k in 0..hull.len() {
            let (x, y) = hull[k];
            let hi = if k + 1 < hull.len() {
                let (x2, y2) = hull[k + 1];
                // Crossing of consecutive hull lines.
                (y2 - y) / ((y2 - y) + (x - x2))
            } else {
                1.0
            };
            let hi = hi.clamp(lo, 1.0);
            total += piece(x - y, y, lo, hi);
            lo = hi;
        }
        total
    };

    let loss = integrate(&lower_hull(weighted_error_points(scores, labels)));
    let loss_max = integrate(&lower_hull(vec![(pi0, 0.0), (0.0, pi1)]));
    if loss_max <= 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - loss / loss_max).clamp(0.0, 1.0))
}

/// Four performance numbers at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sensitivity: f64,
    pub specificity: f64,
    pub h_measure: f64,
    pub auc: f64,
    pub threshold: f64,
    pub counts: Confusion,
}

pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64, severity: Severity) -> Result<MetricsReport> {
    let counts = confusion(scores, labels, threshold)?;
    Ok(MetricsReport {
        sensitivity: counts.sensitivity(),
        specificity: counts.specificity(),
        h_measure: h_measure(scores, labels, severity)?,
        auc: auc(scores, labels)?,
        threshold,
        counts,
    })
}
