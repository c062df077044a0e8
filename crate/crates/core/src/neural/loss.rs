use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower bound on `p_t` inside the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocalLossConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalLossConfig {
    fn default() -> Self {
        FocalLossConfig { alpha: 0.25, gamma: 2.0 }
    }
}

/// Mean over voxels of `−α_t (1 − p_t)^γ log p_t` with `p = σ(logit)`, and
/// its gradient with respect to each logit. `log p_t` is evaluated as a
/// log-sigmoid, so saturated logits keep full precision; where the clamp
/// is active the logarithm contributes no gradient.
pub fn focal_loss<T: Scalar>(logits: &[T], target: &[bool], config: FocalLossConfig) -> Result<(f64, Vec<T>)> {
    if logits.len() != target.len() || logits.is_empty() {
        return Err(Error::ShapeMismatch {
            context: "focal_loss",
            detail: format!("{} logits for {} targets", logits.len(), target.len()),
        });
    }
    let FocalLossConfig { alpha, gamma } = config;
    let n = logits.len() as f64;
    let floor = LOG_CLAMP.ln();
    let mut total = 0.0;
    let grad = logits
        .iter()
        .zip(target)
        .map(|(x, t)| {
            // z = ±x so that p_t = σ(z) and 1 − p_t = σ(−z).
            let (z, sign, a) = if *t { (x.as_f64(), 1.0, alpha) } else { (-x.as_f64(), -1.0, 1.0 - alpha) };
            let e = (-z.abs()).exp();
            let (p_t, q) = if z >= 0.0 { (1.0 / (1.0 + e), e / (1.0 + e)) } else { (e / (1.0 + e), 1.0 / (1.0 + e)) };
            let log_sigmoid = -(z.min(0.0).abs() + e.ln_1p());
            let (log_pt, dlog) = if log_sigmoid > floor { (log_sigmoid, q) } else { (floor, 0.0) };
            let w = a * q.powf(gamma);
            total += -w * log_pt;
            T::of(sign * w * (gamma * p_t * log_pt - dlog) / n)
        })
        .collect();
    Ok((total / n, grad))
}
