//! Adam with decoupled weight decay and bias correction.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::encoder::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
    pub hyper: AdamWConfig,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, hyper: AdamWConfig) -> Self {
        OptimizerState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            hyper,
        }
    }
}

/// One AdamW update:
///
/// ```text
/// p ← p − lr·λ·p
/// m ← β1·m + (1−β1)·g        v ← β2·v + (1−β2)·g²
/// p ← p − lr · (m / (1−β1^t)) / (sqrt(v / (1−β2^t)) + ε)
/// ```
pub fn adamw_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimizerState) -> Result<()> {
    for (name, g) in grads.tensors() {
        if let Some(bad) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric {
                layer: 0,
                detail: format!("non-finite gradient in `{name}` at flat index {bad}"),
            });
        }
    }
    state.step += 1;
    let h = state.hyper;
    let t = state.step as i32;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    let decay = 1.0 - h.lr * h.weight_decay;

    let gs = grads.tensors();
    let mut ms = state.m.tensors_mut();
    let mut vs = state.v.tensors_mut();
    for (i, (_, mut p)) in params.tensors_mut().into_iter().enumerate() {
        Zip::from(&mut p)
            .and(&gs[i].1)
            .and(&mut ms[i].1)
            .and(&mut vs[i].1)
            .for_each(|p, &g, m, v| {
                *p *= decay;
                *m = h.beta1 * *m + (1.0 - h.beta1) * g;
                *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
                *p -= h.lr * (*m / bc1) / ((*v / bc2).sqrt() + h.eps);
            });
    }
    Ok(())
}
