//! Classification losses on softmax outputs, with gradients taken with
//! respect to the pre-softmax logits.

use crate::error::{Error, Result};
use crate::nnet::Tensor;

fn check(probs: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    if probs.rank() != 2 {
        return Err(Error::shape("rank", 2, probs.rank()));
    }
    let (b, k) = (probs.dim(0), probs.dim(1));
    if labels.len() != b {
        return Err(Error::shape("batch", b, labels.len()));
    }
    if b == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Argument(format!("label {bad} out of range for {k} classes")));
    }
    Ok((b, k))
}

/// Mean negative log-likelihood; gradient `(probs - onehot) / B`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = check(probs, labels)?;
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (n, &t) in labels.iter().enumerate() {
        loss -= probs[n * k + t].max(f64::MIN_POSITIVE).ln();
        grad[n * k + t] -= 1.0;
    }
    grad.scale(1.0 / b as f64);
    Ok((loss / b as f64, grad))
}

/// Mean of `-alpha_t (1 - p_t)^gamma ln p_t`.
pub fn focal_loss(probs: &Tensor, labels: &[usize], gamma: f64, alpha: &[f64]) -> Result<(f64, Tensor)> {
    let (b, k) = check(probs, labels)?;
    if !(gamma >= 0.0) {
        return Err(Error::Argument(format!("focal gamma must be >= 0, got {gamma}")));
    }
    if alpha.len() != k {
        return Err(Error::shape("classes", k, alpha.len()));
    }
    if alpha.iter().any(|&a| !(a >= 0.0)) {
        return Err(Error::Argument("focal alpha weights must be >= 0".into()));
    }
    let mut grad = Tensor::zeros(probs.shape());
    let mut loss = 0.0;
    for (n, &t) in labels.iter().enumerate() {
        let row = &probs.data()[n * k..(n + 1) * k];
        let pt = row[t].max(f64::MIN_POSITIVE);
        let a = alpha[t];
        let one_minus = 1.0 - pt;
        let ln_pt = pt.ln();
        loss -= a * one_minus.powf(gamma) * ln_pt;
        // d(loss)/d(z_j) = c * (p_j - [j == t])
        let decay = if one_minus > 0.0 && gamma != 0.0 {
            gamma * one_minus.powf(gamma - 1.0) * pt * ln_pt
        } else {
            0.0
        };
        let c = a * (one_minus.powf(gamma) - decay);
        for j in 0..k {
            let onehot = if j == t { 1.0 } else { 0.0 };
            grad[n * k + j] = c * (row[j] - onehot) / b as f64;
        }
    }
    Ok((loss / b as f64, grad))
}

/// Inverse class frequency normalized to mean 1 over the classes present.
pub fn inverse_frequency_alpha(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let inv: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
        .collect();
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    let mean = inv.iter().sum::<f64>() / present as f64;
    inv.iter().map(|v| if mean > 0.0 { v / mean } else { 1.0 }).collect()
}
