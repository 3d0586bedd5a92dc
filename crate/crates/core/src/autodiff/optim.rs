use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{Real, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub config: AdamConfig,
    pub lr: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(sizes: impl IntoIterator<Item = usize>, config: AdamConfig, lr: f64) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
            config,
            lr,
        }
    }
}

/// One bias-corrected Adam update at `state.lr`.
///
/// A `None` gradient leaves that tensor and its moments untouched, so
/// parameters the loss never touched are not moved by stale momentum.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor2<T>],
    grads: &[Option<&Tensor2<T>>],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.t as i32;
    let bc1 = 1.0 - libm::pow(beta1, t as f64);
    let bc2 = 1.0 - libm::pow(beta2, t as f64);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
    let step = T::of(state.lr / bc1);
    let inv_bc2 = T::of(1.0 / bc2);
    let eps = T::of(eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let Some(g) = g else { continue };
        if p.shape() != g.shape() || state.m[i].len() != p.len() {
            return Err(Error::Shape(format!("adam: parameter {i} shape mismatch")));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mi = b1 * *mi + one_b1 * gi;
            *vi = b2 * *vi + one_b2 * gi * gi;
            *w -= step * *mi / ((*vi * inv_bc2).sqrt() + eps);
        }
    }
    Ok(())
}

/// Cosine decay from `lr0` at step 0 to `lr_floor` at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64, lr_floor: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    lr_floor + 0.5 * (lr0 - lr_floor) * (1.0 + libm::cos(core::f64::consts::PI * frac))
}
