//! AdamW over the upper triangle of a square operator.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{GeoError, Result};
use crate::math;
use crate::matrix::UpperTriangularMatrix;
use crate::training::TrainConfig;

/// First/second moment estimates, stored densely; the lower triangle stays zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    dim: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u32,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            m: vec![0.0; dim * dim],
            v: vec![0.0; dim * dim],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u32 {
        self.step
    }
}

/// One decoupled-weight-decay Adam update. Only upper-triangle entries move.
pub fn adamw_step(
    state: &mut AdamState,
    w: &UpperTriangularMatrix,
    grad: &UpperTriangularMatrix,
    cfg: &TrainConfig,
) -> Result<UpperTriangularMatrix> {
    let d = w.dim();
    for found in [state.dim, grad.dim()] {
        if found != d {
            return Err(GeoError::DimensionMismatch { expected: d, found });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - libm::pow(cfg.adam_beta1, t as f64);
    let bias2 = 1.0 - libm::pow(cfg.adam_beta2, t as f64);
    let lr = cfg.learning_rate;
    let decay = 1.0 - lr * cfg.weight_decay;

    let mut out = w.as_slice().to_vec();
    let g = grad.as_slice();
    for (i, j) in UpperTriangularMatrix::upper_indices(d) {
        let k = i * d + j;
        state.m[k] = cfg.adam_beta1 * state.m[k] + (1.0 - cfg.adam_beta1) * g[k];
        state.v[k] = cfg.adam_beta2 * state.v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
        let m_hat = state.m[k] / bias1;
        let v_hat = state.v[k] / bias2;
        if cfg.weight_decay != 0.0 {
            out[k] *= decay;
        }
        out[k] -= lr * m_hat / (math::sqrt(v_hat) + cfg.adam_eps);
    }
    UpperTriangularMatrix::from_dense(d, out)
}
