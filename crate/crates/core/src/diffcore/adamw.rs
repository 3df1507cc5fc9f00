//! AdamW: Adam moments with weight decay decoupled from the gradient.
//!
//! ```text
//! θ ← θ − lr·wd·θ                      (slices flagged for decay only)
//! m ← β₁m + (1−β₁)g,   v ← β₂v + (1−β₂)g²
//! θ ← θ − lr · (m / (1−β₁ᵗ)) / (√(v / (1−β₂ᵗ)) + ε)
//! ```

use super::params::ParamStore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient component at index {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("gradient length {got} does not match parameter count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-2,
            batch_size: 128,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.learning_rate > 0.0) {
            return Err(OptimError::InvalidConfig("learning-rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(OptimError::InvalidConfig("betas must lie in [0, 1)"));
        }
        if !(self.epsilon >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(OptimError::InvalidConfig("epsilon and weight-decay must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(OptimError::InvalidConfig("batch-size must be >= 1"));
        }
        Ok(())
    }
}

/// One AdamW update of `params` in place.
///
/// A non-finite gradient rejects the whole step: parameters, moments and the
/// step counter are left untouched.
pub fn adamw_step(params: &mut ParamStore, grad: &[f64], config: &OptimizerConfig) -> Result<(), OptimError> {
    if grad.len() != params.len() {
        return Err(OptimError::LengthMismatch {
            expected: params.len(),
            got: grad.len(),
        });
    }
    if let Some((index, &value)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(OptimError::NonFiniteGradient { index, value });
    }

    params.step += 1;
    let t = params.step as i32;
    let lr = config.learning_rate;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);

    let ParamStore {
        layout,
        raw,
        first_moment,
        second_moment,
        ..
    } = params;
    for slice in layout.slices() {
        let decay = if slice.decay { lr * config.weight_decay } else { 0.0 };
        for i in slice.range() {
            let g = grad[i];
            raw[i] -= decay * raw[i];
            let m = config.beta1 * first_moment[i] + (1.0 - config.beta1) * g;
            let v = config.beta2 * second_moment[i] + (1.0 - config.beta2) * g * g;
            first_moment[i] = m;
            second_moment[i] = v;
            raw[i] -= lr * (m / bc1) / ((v / bc2).sqrt() + config.epsilon);
        }
    }
    Ok(())
}
