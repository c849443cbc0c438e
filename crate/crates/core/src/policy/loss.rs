use serde::{Deserialize, Serialize};

use super::config::ACTION_DIM;
use super::net::LossWeights;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub center: f64,
    pub reg: f64,
    pub task: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(center: f64, reg: f64, task: f64, w: LossWeights) -> Self {
        Self {
            center,
            reg,
            task,
            total: center + w.lambda_reg * reg + w.lambda_task * task,
        }
    }

    /// Component-wise mean; the total is recombined from the means.
    pub fn mean(items: &[LossBreakdown], w: LossWeights) -> Self {
        if items.is_empty() {
            return Self::default();
        }
        let n = items.len() as f64;
        let sum = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self::combine(sum(|b| b.center), sum(|b| b.reg), sum(|b| b.task), w)
    }

    pub fn is_finite(&self) -> bool {
        self.center.is_finite() && self.reg.is_finite() && self.task.is_finite() && self.total.is_finite()
    }
}

/// KL divergence of `N(μ, σ²)` from the standard normal, summed over dimensions.
pub fn kl_loss(mu: &[f64], log_sigma: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_sigma)
        .map(|(m, ls)| m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls)
        .sum::<f64>()
}

/// `(1/k) Σ_t w_t · MAE_t` over a k × 4 chunk.
pub fn center_loss(pred: &[f64], target: &[f64], weights: &[f64]) -> Result<f64> {
    let k = weights.len();
    if k == 0 || pred.len() != target.len() || pred.len() != k * ACTION_DIM {
        return Err(Error::ShapeMismatch(format!(
            "center loss: {} predicted, {} target values for {} weights",
            pred.len(),
            target.len(),
            k
        )));
    }
    let sum: f64 = (0..k)
        .map(|t| {
            let mae = (0..ACTION_DIM)
                .map(|d| (pred[t * ACTION_DIM + d] - target[t * ACTION_DIM + d]).abs())
                .sum::<f64>()
                / ACTION_DIM as f64;
            weights[t] * mae
        })
        .sum();
    Ok(sum / k as f64)
}

/// Mean squared error of the completion sequence.
pub fn task_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "task loss: {} predicted vs {} target values",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64)
}
