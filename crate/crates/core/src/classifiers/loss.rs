use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `w_c = ln(Σ_c' max(n_c', 1) / max(n_c, 1)) + 1`.
pub fn class_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().map(|&c| c.max(1)).sum();
    counts
        .iter()
        .map(|&c| (total as f64 / c.max(1) as f64).ln() + 1.0)
        .collect()
}

pub fn label_counts(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeLoss {
    /// `−Σ_i w_{y_i} ln ŷ_{i,y_i}`.
    pub sum: f64,
    pub count: usize,
    /// Examples whose true-class probability hit [`PROB_FLOOR`].
    pub clamped: usize,
}

impl CeLoss {
    /// Per-example mean, the quantity minimised during training.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Weighted categorical cross-entropy over probability rows.
pub fn weighted_ce_loss(probs: ArrayView2<'_, f64>, labels: &[usize], weights: &[f64]) -> Result<CeLoss> {
    if probs.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: probs.nrows(),
        });
    }
    if probs.ncols() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: probs.ncols(),
        });
    }
    let mut loss = CeLoss {
        sum: 0.0,
        count: labels.len(),
        clamped: 0,
    };
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        if y >= weights.len() {
            return Err(Error::Precondition(format!("label {y} out of range")));
        }
        if (row.sum() - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!("prediction row sums to {}", row.sum())));
        }
        let p = row[y];
        if p < PROB_FLOOR {
            loss.clamped += 1;
        }
        loss.sum -= weights[y] * p.max(PROB_FLOOR).ln();
    }
    Ok(loss)
}

/// Gradient of the batch-mean loss with respect to the softmax logits:
/// `w_{y_i} (p_i − e_{y_i}) / B`.
pub fn weighted_ce_logit_grad(probs: ArrayView2<'_, f64>, labels: &[usize], weights: &[f64]) -> Array2<f64> {
    let b = labels.len().max(1) as f64;
    let mut d = probs.to_owned();
    for (mut row, &y) in d.rows_mut().into_iter().zip(labels) {
        row[y] -= 1.0;
        row *= weights[y] / b;
    }
    d
}
