//! Scaled dot-product similarity and exponential attention normalization.

use crate::error::ModelError;
use crate::linalg::dot;

/// `aᵀb / √D`
pub fn scaled_dot(a: &[f64], b: &[f64], dim: usize) -> Result<f64, ModelError> {
    if a.len() != dim {
        return Err(ModelError::DimensionMismatch {
            expected: dim,
            got: a.len(),
        });
    }
    if b.len() != dim {
        return Err(ModelError::DimensionMismatch {
            expected: dim,
            got: b.len(),
        });
    }
    Ok(scaled_dot_unchecked(a, b, dim))
}

#[inline]
pub(crate) fn scaled_dot_unchecked(a: &[f64], b: &[f64], dim: usize) -> f64 {
    dot(a, b) / (dim as f64).sqrt()
}

/// Exponential normalization with max subtraction.
pub fn normalize_attention(scores: &[f64]) -> Result<Vec<f64>, ModelError> {
    if scores.is_empty() {
        return Err(ModelError::EmptyScores);
    }
    Ok(softmax(scores))
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for w in &mut out {
        *w /= sum;
    }
    out
}

/// Gradient of the scores given upstream gradients of the normalized weights.
pub(crate) fn softmax_backward(weights: &[f64], d_weights: &[f64]) -> Vec<f64> {
    let inner: f64 = weights.iter().zip(d_weights).map(|(w, d)| w * d).sum();
    weights
        .iter()
        .zip(d_weights)
        .map(|(w, d)| w * (d - inner))
        .collect()
}
