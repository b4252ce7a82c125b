//! Focal utility loss over positive/negative pair logits.
//!
//! For logit x with p = sigma(x), a positive pair contributes
//! alpha * (1 - p)^gamma * softplus(-x) and a negative pair contributes
//! p^gamma * softplus(x); the batch loss is the mean. With gamma = 0 and
//! alpha = 1 this is exactly binary cross-entropy.

use crate::error::{Error, Result};
use crate::objective::ranking::{sigmoid, softplus};

/// Focusing strength and positive-class weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalConfig {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        FocalConfig { gamma: 2.0, alpha: 0.5 }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

fn term_positive(cfg: &FocalConfig, x: f64) -> (f64, f64) {
    let p = sigmoid(x);
    let q = 1.0 - p;
    let modulator = if cfg.gamma == 0.0 { 1.0 } else { q.powf(cfg.gamma) };
    let loss = cfg.alpha * modulator * softplus(-x);
    // d/dx [ (1-p)^g * softplus(-x) ] = (1-p)^g * (g * p * ln p - (1 - p)).
    // ln p = -softplus(-x) stays finite for any x.
    let ln_p = -softplus(-x);
    let grad = cfg.alpha * modulator * (cfg.gamma * p * ln_p - q);
    (loss, grad)
}

fn term_negative(cfg: &FocalConfig, x: f64) -> (f64, f64) {
    let p = sigmoid(x);
    let modulator = if cfg.gamma == 0.0 { 1.0 } else { p.powf(cfg.gamma) };
    let loss = modulator * softplus(x);
    // d/dx [ p^g * softplus(x) ] = p^g * (p - g * (1-p) * ln(1-p)),
    // with ln(1-p) = -softplus(x).
    let ln_q = -softplus(x);
    let grad = modulator * (p - cfg.gamma * (1.0 - p) * ln_q);
    (loss, grad)
}

/// Mean focal loss over a batch of logits plus d(mean)/d(logit) for each.
/// `labels[i]` is true for positive pairs.
pub fn focal_loss(cfg: &FocalConfig, logits: &[f64], labels: &[bool]) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    if logits.is_empty() {
        return Err(Error::invalid("focal loss needs a non-empty batch"));
    }
    if logits.len() != labels.len() {
        return Err(Error::invalid("focal loss logits/labels length mismatch"));
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.iter().zip(labels) {
        let (loss, grad) = if y { term_positive(cfg, x) } else { term_negative(cfg, x) };
        total += loss;
        grads.push(grad / n);
    }
    Ok((total / n, grads))
}
