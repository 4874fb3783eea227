use ndarray::Array2;

use super::Tensor2D;
use crate::error::{usage, Result};

/// Probabilities below this are clipped before taking the log.
pub const PROB_FLOOR: f64 = 1e-30;

pub fn one_hot(index: usize, cardinality: usize) -> Result<Tensor2D> {
    one_hot_batch(&[index], cardinality)
}

pub fn one_hot_batch(indices: &[usize], cardinality: usize) -> Result<Tensor2D> {
    let mut out = Array2::zeros((indices.len(), cardinality));
    for (row, &i) in indices.iter().enumerate() {
        if i >= cardinality {
            return Err(usage!("message index {i} out of range for {cardinality} messages"));
        }
        out[[row, i]] = 1.0;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CrossEntropy {
    /// Mean of `-ln p[label]` over the batch.
    pub loss: f64,
    /// Gradient with respect to the softmax logits: `(p - onehot) / batch`.
    pub grad_logits: Tensor2D,
    /// Rows whose label probability fell below [`PROB_FLOOR`].
    pub clipped: usize,
}

pub fn cross_entropy_loss(probs: &Tensor2D, labels: &[usize]) -> Result<CrossEntropy> {
    let (rows, cols) = probs.dim();
    if labels.len() != rows {
        return Err(usage!("{} labels for {rows} rows", labels.len()));
    }
    if rows == 0 {
        return Err(usage!("empty batch"));
    }
    let mut grad = probs.clone();
    let mut total = 0.0;
    let mut clipped = 0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= cols {
            return Err(usage!("label {label} out of range for {cols} classes"));
        }
        let p = probs[[r, label]];
        if p < PROB_FLOOR {
            clipped += 1;
        }
        total -= p.max(PROB_FLOOR).ln();
        grad[[r, label]] -= 1.0;
    }
    let b = rows as f64;
    grad /= b;
    if clipped > 0 {
        log::warn!("cross-entropy clipped {clipped} probabilities at {PROB_FLOOR:e}");
    }
    Ok(CrossEntropy { loss: total / b, grad_logits: grad, clipped })
}
