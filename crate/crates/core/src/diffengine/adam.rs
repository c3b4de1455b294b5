use serde::{Deserialize, Serialize};

use crate::error::{NovaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning rate multiplier reached at the last step (exponential decay).
    pub lr_decay: f64,
    /// Global-norm gradient clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay: 0.1,
            clip_norm: None,
        }
    }
}

impl AdamConfig {
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        if total_steps == 0 {
            return self.lr;
        }
        self.lr * self.lr_decay.powf(step as f64 / total_steps as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.lr_decay > 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(NovaError::Config(format!("invalid optimizer settings: {self:?}")))
        }
    }
}

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(len: usize, config: &AdamConfig) -> Self {
        OptimizerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
        }
    }
}

/// One bias-corrected Adam update. Fails on the first non-finite gradient
/// without touching `params`.
pub fn optimizer_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NovaError::InvalidInput(format!(
            "optimizer length mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NovaError::NonFinite(format!("gradient of parameter {i}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Rescales `grads` in place so their L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
