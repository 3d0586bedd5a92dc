//! Dense `rows×cols` kernel with tape-based reverse-mode differentiation.
//!
//! The value-level functions here ([`matmul`], [`softmax_rows`], ...) are
//! the forward passes; [`Tape`] records the same computations and replays
//! them backwards.

mod gradcheck;
mod kernels;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use kernels::AttnShape;
pub use optim::{adam_step, cosine_lr, AdamConfig, AdamState};
pub use tape::{grad_or_zeros, Gradients, Tape, Var};
pub use tensor::{Real, Tensor2};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn matmul<T: Real>(a: &Tensor2<T>, b: &Tensor2<T>) -> Result<Tensor2<T>> {
    if a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "matmul: {}x{} · {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut out = Tensor2::zeros(a.rows(), b.cols());
    kernels::gemm(a.data(), b.data(), out.data_mut(), a.rows(), a.cols(), b.cols());
    Ok(out)
}

/// Row-wise softmax with max subtraction. Rejects NaN input.
pub fn softmax_rows<T: Real>(x: &Tensor2<T>) -> Result<Tensor2<T>> {
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN in softmax input".into()));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        kernels::softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

/// Per row: `(x - mean) / sqrt(var + eps) * gain + bias`.
pub fn layer_norm<T: Real>(x: &Tensor2<T>, gain: &[T], bias: &[T], eps: T) -> Result<Tensor2<T>> {
    if gain.len() != x.cols() || bias.len() != x.cols() {
        return Err(Error::Shape(format!(
            "layer_norm: {} columns, gain {}, bias {}",
            x.cols(),
            gain.len(),
            bias.len()
        )));
    }
    let mut out = Tensor2::zeros(x.rows(), x.cols());
    kernels::layer_norm_forward(x.data(), gain, bias, eps, x.rows(), x.cols(), out.data_mut());
    Ok(out)
}

/// Tanh approximation of the Gaussian error linear unit.
pub fn gelu<T: Real>(x: &Tensor2<T>) -> Tensor2<T> {
    x.map(kernels::gelu)
}

/// Mean negative log-likelihood of `labels` under row-softmaxed logits.
pub fn cross_entropy<T: Real>(logits: &Tensor2<T>, labels: &[usize]) -> Result<T> {
    cross_entropy_with_probs(logits, labels, None).map(|(loss, _)| loss)
}

pub(crate) fn cross_entropy_with_probs<T: Real>(
    logits: &Tensor2<T>,
    labels: &[usize],
    weights: Option<&[T]>,
) -> Result<(T, Vec<T>)> {
    let (b, c) = logits.shape();
    if labels.len() != b || b == 0 {
        return Err(Error::Shape(format!("{} labels for {b} logit rows", labels.len())));
    }
    if let Some(w) = weights {
        if w.len() != b {
            return Err(Error::Shape(format!("{} weights for {b} logit rows", w.len())));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Shape(format!("label {bad} outside {c} classes")));
    }
    let mut probs = vec![T::zero(); b * c];
    let mut total = T::zero();
    for i in 0..b {
        let row = logits.row(i);
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let sum = row.iter().fold(T::zero(), |a, &x| a + (x - max).exp());
        let lse = max + sum.ln();
        for j in 0..c {
            probs[i * c + j] = (row[j] - lse).exp();
        }
        let w = weights.map_or(T::one(), |w| w[i]);
        total += w * (lse - row[labels[i]]);
    }
    Ok((total / T::of(b as f64), probs))
}
