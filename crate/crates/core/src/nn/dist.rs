//! Categorical distributions parameterised by logits.

use super::tensor::log_softmax_row;
use crate::error::{Error, Result};

/// Softmax with max subtraction.
pub fn action_distribution(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_probs(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    log_softmax_row(logits, &mut out);
    out
}

pub fn log_prob(logits: &[f64], action: usize) -> Result<f64> {
    if action >= logits.len() {
        return Err(Error::Input(format!(
            "action {action} out of range for {} actions",
            logits.len()
        )));
    }
    Ok(log_probs(logits)[action])
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(logits: &[f64]) -> f64 {
    let lp = log_probs(logits);
    -lp.iter()
        .map(|&l| {
            let p = l.exp();
            if p > 0.0 {
                p * l
            } else {
                0.0
            }
        })
        .sum::<f64>()
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}
