//! Forward and backward math on raw row-major buffers.
//!
//! Everything here is shape-checked by the caller. The loops keep the
//! innermost index contiguous so the compiler can vectorize them.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Real;

/// `out(m×n) += a(m×k) · b(k×n)`
pub(crate) fn gemm<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
}

/// `out(m×k) += g(m×n) · b(k×n)ᵀ`
pub(crate) fn gemm_bt<T: Real>(g: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    let mut bt = vec![T::zero(); n * k];
    for p in 0..k {
        for j in 0..n {
            bt[j * k + p] = b[p * n + j];
        }
    }
    gemm(g, &bt, out, m, n, k);
}

/// `out(k×n) += a(m×k)ᵀ · g(m×n)`
pub(crate) fn gemm_at<T: Real>(a: &[T], g: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == T::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += a_ip * gv;
            }
        }
    }
}

/// Numerically stable softmax of one row, in place.
pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Backward of a row softmax given its output `p` and upstream `dp`.
pub(crate) fn softmax_backward_row<T: Real>(p: &[T], dp: &[T], dx: &mut [T]) {
    let dot = p.iter().zip(dp).fold(T::zero(), |acc, (&pi, &gi)| acc + pi * gi);
    for ((d, &pi), &gi) in dx.iter_mut().zip(p).zip(dp) {
        *d += pi * (gi - dot);
    }
}

pub(crate) struct LayerNormCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layer_norm_forward<T: Real>(
    x: &[T],
    gain: &[T],
    bias: &[T],
    eps: T,
    rows: usize,
    cols: usize,
    out: &mut [T],
) -> LayerNormCache<T> {
    let mut xhat = vec![T::zero(); rows * cols];
    let mut rstd = vec![T::zero(); rows];
    let n = T::of(cols as f64);
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let mean = xr.iter().fold(T::zero(), |a, &v| a + v) / n;
        let var = xr.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for c in 0..cols {
            let h = (xr[c] - mean) * rs;
            xhat[r * cols + c] = h;
            out[r * cols + c] = h * gain[c] + bias[c];
        }
    }
    LayerNormCache { xhat, rstd }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward<T: Real>(
    dy: &[T],
    gain: &[T],
    cache: &LayerNormCache<T>,
    rows: usize,
    cols: usize,
    dx: Option<&mut [T]>,
    dgain: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
) {
    if let Some(dg) = dgain {
        for r in 0..rows {
            for c in 0..cols {
                dg[c] += dy[r * cols + c] * cache.xhat[r * cols + c];
            }
        }
    }
    if let Some(db) = dbias {
        for r in 0..rows {
            for c in 0..cols {
                db[c] += dy[r * cols + c];
            }
        }
    }
    if let Some(dx) = dx {
        let n = T::of(cols as f64);
        for r in 0..rows {
            let mut mean_d = T::zero();
            let mut mean_dx = T::zero();
            for c in 0..cols {
                let d = dy[r * cols + c] * gain[c];
                mean_d += d;
                mean_dx += d * cache.xhat[r * cols + c];
            }
            mean_d /= n;
            mean_dx /= n;
            let rs = cache.rstd[r];
            for c in 0..cols {
                let d = dy[r * cols + c] * gain[c];
                dx[r * cols + c] += rs * (d - mean_d - cache.xhat[r * cols + c] * mean_dx);
            }
        }
    }
}

const GELU_A: f64 = 0.044715;
// sqrt(2/pi)
const GELU_C: f64 = 0.797_884_560_802_865_4;

#[inline]
pub(crate) fn gelu<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}

/// Geometry of a batched multi-head attention call. Rows of q/k/v are
/// `batch·seq` tokens; columns are `heads·d_head`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnShape {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
    pub d_head: usize,
}

impl AttnShape {
    #[inline]
    pub(crate) fn width(&self) -> usize {
        self.heads * self.d_head
    }

    /// Offset of the `seq×seq` probability block for `(b, h)`.
    #[inline]
    pub(crate) fn block(&self, b: usize, h: usize) -> usize {
        (b * self.heads + h) * self.seq * self.seq
    }
}

/// Returns attention probabilities laid out `[batch][head][query][key]`
/// and writes the attended values into `out`.
pub(crate) fn attention_forward<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    shape: AttnShape,
    valid: Option<&[usize]>,
    out: &mut [T],
) -> Vec<T> {
    let AttnShape {
        batch,
        seq,
        heads,
        d_head,
    } = shape;
    let w = shape.width();
    let scale = T::one() / T::of(d_head as f64).sqrt();
    let mut probs = vec![T::zero(); batch * heads * seq * seq];
    for b in 0..batch {
        let keys = valid.map_or(seq, |v| v[b].clamp(1, seq));
        for h in 0..heads {
            let off = h * d_head;
            let block = shape.block(b, h);
            for s in 0..seq {
                let qr = &q[(b * seq + s) * w + off..(b * seq + s) * w + off + d_head];
                let row = &mut probs[block + s * seq..block + (s + 1) * seq];
                for t in 0..seq {
                    row[t] = if t < keys {
                        let kr = &k[(b * seq + t) * w + off..(b * seq + t) * w + off + d_head];
                        qr.iter().zip(kr).fold(T::zero(), |a, (&x, &y)| a + x * y) * scale
                    } else {
                        T::neg_infinity()
                    };
                }
                softmax_in_place(row);
                let o = &mut out[(b * seq + s) * w + off..(b * seq + s) * w + off + d_head];
                for t in 0..keys {
                    let p = row[t];
                    let vr = &v[(b * seq + t) * w + off..(b * seq + t) * w + off + d_head];
                    for (ov, &vv) in o.iter_mut().zip(vr) {
                        *ov += p * vv;
                    }
                }
            }
        }
    }
    probs
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    d_out: &[T],
    shape: AttnShape,
    dq: Option<&mut [T]>,
    dk: Option<&mut [T]>,
    dv: Option<&mut [T]>,
) {
    let AttnShape {
        batch,
        seq,
        heads,
        d_head,
    } = shape;
    let w = shape.width();
    let scale = T::one() / T::of(d_head as f64).sqrt();
    let (mut dq, mut dk, mut dv) = (dq, dk, dv);
    let mut dp = vec![T::zero(); seq];
    let mut ds = vec![T::zero(); seq];
    for b in 0..batch {
        for h in 0..heads {
            let off = h * d_head;
            let block = shape.block(b, h);
            for s in 0..seq {
                let p = &probs[block + s * seq..block + (s + 1) * seq];
                let go = &d_out[(b * seq + s) * w + off..(b * seq + s) * w + off + d_head];
                for t in 0..seq {
                    let vr = &v[(b * seq + t) * w + off..(b * seq + t) * w + off + d_head];
                    dp[t] = go.iter().zip(vr).fold(T::zero(), |a, (&x, &y)| a + x * y);
                }
                if let Some(dv) = dv.as_deref_mut() {
                    for t in 0..seq {
                        if p[t] == T::zero() {
                            continue;
                        }
                        let dvr = &mut dv[(b * seq + t) * w + off..(b * seq + t) * w + off + d_head];
                        for (d, &g) in dvr.iter_mut().zip(go) {
                            *d += p[t] * g;
                        }
                    }
                }
                ds.iter_mut().for_each(|x| *x = T::zero());
                softmax_backward_row(p, &dp, &mut ds);
                if let Some(dq) = dq.as_deref_mut() {
                    let dqr = &mut dq[(b * seq + s) * w + off..(b * seq + s) * w + off + d_head];
                    for t in 0..seq {
                        if ds[t] == T::zero() {
                            continue;
                        }
                        let kr = &k[(b * seq + t) * w + off..(b * seq + t) * w + off + d_head];
                        let f = ds[t] * scale;
                        for (d, &kv) in dqr.iter_mut().zip(kr) {
                            *d += f * kv;
                        }
                    }
                }
                if let Some(dk) = dk.as_deref_mut() {
                    let qr = &q[(b * seq + s) * w + off..(b * seq + s) * w + off + d_head];
                    for t in 0..seq {
                        if ds[t] == T::zero() {
                            continue;
                        }
                        let dkr = &mut dk[(b * seq + t) * w + off..(b * seq + t) * w + off + d_head];
                        let f = ds[t] * scale;
                        for (d, &qv) in dkr.iter_mut().zip(qr) {
                            *d += f * qv;
                        }
                    }
                }
            }
        }
    }
}
