//! Adam with bias correction, plus global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GruModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: GruModel,
    pub second: GruModel,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &GruModel) -> Self {
        AdamState {
            first: GruModel::zeros(model.dims),
            second: GruModel::zeros(model.dims),
            step: 0,
        }
    }
}

pub fn adam_update(
    model: &mut GruModel,
    grads: &GruModel,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.dims != model.dims || state.first.dims != model.dims {
        return Err(Error::contract(
            "gradient and optimizer shapes must match the model",
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let correct1 = 1.0 - cfg.beta1.powi(t);
    let correct2 = 1.0 - cfg.beta2.powi(t);
    let params = model.tensors_mut();
    let grads = grads.tensors();
    let firsts = state.first.tensors_mut();
    let seconds = state.second.tensors_mut();
    for (((p, g), m), v) in params.into_iter().zip(grads).zip(firsts).zip(seconds) {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / correct1;
            let v_hat = v[i] / correct2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

pub fn global_norm(grads: &GruModel) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut GruModel, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// Accumulates `src * weight` into `dst`.
pub fn accumulate(dst: &mut GruModel, src: &GruModel, weight: f64) {
    for (d, s) in dst.tensors_mut().into_iter().zip(src.tensors()) {
        d.iter_mut().zip(s).for_each(|(d, s)| *d += weight * s);
    }
}
