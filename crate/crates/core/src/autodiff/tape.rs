use alloc::borrow::Cow;
use alloc::format;
use alloc::vec::Vec;

use super::kernels::{self, AttnShape, LayerNormCache};
use super::tensor::{Real, Tensor2};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        cache: LayerNormCache<T>,
    },
    Gelu(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        weights: Option<Vec<T>>,
        probs: Vec<T>,
    },
    Gather(Vec<(Var, usize)>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        shape: AttnShape,
        probs: Vec<T>,
    },
    WeightedSum(Var, Tensor2<T>),
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor2<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Reverse-mode recording of one forward pass.
///
/// Leaves may borrow parameter tensors, so a tape is built per step and
/// dropped before the optimizer mutates them.
pub struct Tape<'a, T: Real = f32> {
    nodes: Vec<Node<'a, T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
/// `None` means the loss does not depend on that value.
pub struct Gradients<T: Real = f32> {
    grads: Vec<Option<Tensor2<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor2<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor2<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

impl<'a, T: Real> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor2<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf borrowing `t`.
    pub fn param(&mut self, t: &'a Tensor2<T>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Trainable leaf owning `t`.
    pub fn param_owned(&mut self, t: Tensor2<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor2<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor2<T>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor2<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Attention probabilities `[batch][head][query][key]` saved by an
    /// [`attention`](Self::attention) node.
    pub fn attention_probs(&self, v: Var) -> Option<(&[T], AttnShape)> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, shape, .. } => Some((probs, *shape)),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).shape();
        let (k2, n) = self.value(b).shape();
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let mut out = Tensor2::zeros(m, n);
        kernels::gemm(self.value(a).data(), self.value(b).data(), out.data_mut(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(out), Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err("add", sa, sb));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(out), Op::Add(a, b), rg))
    }

    /// Adds a `1×c` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        let sr = self.value(row).shape();
        if sr != (1, c) {
            return Err(shape_err("add_row", (r, c), sr));
        }
        let mut out = self.value(a).clone();
        let bias = self.value(row).data();
        for i in 0..r {
            for (o, &b) in out.row_mut(i).iter_mut().zip(bias) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Cow::Owned(out), Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(Cow::Owned(out), Op::Scale(a, s), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = super::softmax_rows(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(Cow::Owned(out), Op::Softmax(a), rg))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let (r, c) = self.value(x).shape();
        for p in [gain, bias] {
            let s = self.value(p).shape();
            if s != (1, c) {
                return Err(shape_err("layer_norm gain/bias", (1, c), s));
            }
        }
        let mut out = Tensor2::zeros(r, c);
        let cache = kernels::layer_norm_forward(
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            eps,
            r,
            c,
            out.data_mut(),
        );
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(Cow::Owned(out), Op::LayerNorm { x, gain, bias, cache }, rg))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(kernels::gelu);
        let rg = self.rg(a);
        self.push(Cow::Owned(out), Op::Gelu(a), rg)
    }

    /// Mean (optionally per-sample weighted) negative log-likelihood of
    /// `labels` under row-softmaxed `logits`. Produces a `1×1` value.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize], weights: Option<&[T]>) -> Result<Var> {
        let (loss, probs) = super::cross_entropy_with_probs(self.value(logits), labels, weights)?;
        let rg = self.rg(logits);
        Ok(self.push(
            Cow::Owned(Tensor2::scalar(loss)),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                weights: weights.map(<[T]>::to_vec),
                probs,
            },
            rg,
        ))
    }

    /// Builds a matrix whose row `r` is row `sources[r].1` of `sources[r].0`.
    pub fn gather_rows(&mut self, sources: Vec<(Var, usize)>) -> Result<Var> {
        let cols = match sources.first() {
            Some(&(v, _)) => self.value(v).cols(),
            None => return Err(Error::Shape("gather_rows needs at least one row".into())),
        };
        let mut out = Tensor2::zeros(sources.len(), cols);
        let mut rg = false;
        for (r, &(v, src)) in sources.iter().enumerate() {
            let t = self.value(v);
            if t.cols() != cols || src >= t.rows() {
                return Err(Error::Shape(format!(
                    "gather_rows: row {src} of a {}x{} source into width {cols}",
                    t.rows(),
                    t.cols()
                )));
            }
            out.row_mut(r).copy_from_slice(t.row(src));
            rg |= self.nodes[v.0].requires_grad;
        }
        Ok(self.push(Cow::Owned(out), Op::Gather(sources), rg))
    }

    /// Batched multi-head scaled dot-product attention.
    ///
    /// `valid[b]`, when given, masks keys at positions `>= valid[b]` for
    /// sample `b`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, shape: AttnShape, valid: Option<&[usize]>) -> Result<Var> {
        let want = (shape.batch * shape.seq, shape.width());
        for x in [q, k, v] {
            let s = self.value(x).shape();
            if s != want {
                return Err(shape_err("attention q/k/v", want, s));
            }
        }
        if let Some(valid) = valid {
            if valid.len() != shape.batch {
                return Err(Error::Shape("attention mask length != batch".into()));
            }
        }
        let mut out = Tensor2::zeros(want.0, want.1);
        let probs = kernels::attention_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            shape,
            valid,
            out.data_mut(),
        );
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(Cow::Owned(out), Op::Attention { q, k, v, shape, probs }, rg))
    }

    /// `Σ a ⊙ w` for a constant weight tensor, as a `1×1` value.
    pub fn weighted_sum(&mut self, a: Var, w: Tensor2<T>) -> Result<Var> {
        let sa = self.value(a).shape();
        if sa != w.shape() {
            return Err(shape_err("weighted_sum", sa, w.shape()));
        }
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(w.data())
            .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        let rg = self.rg(a);
        Ok(self.push(Cow::Owned(Tensor2::scalar(s)), Op::WeightedSum(a, w), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        self.weighted_sum(a, Tensor2::filled(r, c, T::one()))
    }

    /// Back-propagates from a `1×1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accum<'g>(&self, grads: &'g mut [Option<Tensor2<T>>], v: Var) -> Option<&'g mut Tensor2<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let (r, c) = self.value(v).shape();
        Some(grads[v.0].get_or_insert_with(|| Tensor2::zeros(r, c)))
    }

    fn propagate(&self, op: &Op<T>, out: &Tensor2<T>, g: &Tensor2<T>, grads: &mut [Option<Tensor2<T>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).shape();
                let n = self.value(*b).cols();
                if let Some(ga) = self.accum(grads, *a) {
                    kernels::gemm_bt(g.data(), self.value(*b).data(), ga.data_mut(), m, n, k);
                }
                if let Some(gb) = self.accum(grads, *b) {
                    kernels::gemm_at(self.value(*a).data(), g.data(), gb.data_mut(), m, k, n);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = self.accum(grads, v) {
                        gv.add_assign(g);
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = self.accum(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gr) = self.accum(grads, *row) {
                    let gr = gr.data_mut();
                    for i in 0..g.rows() {
                        for (d, &x) in gr.iter_mut().zip(g.row(i)) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.accum(grads, *a) {
                    for (d, &x) in ga.data_mut().iter_mut().zip(g.data()) {
                        *d += x * *s;
                    }
                }
            }
            Op::Softmax(a) => {
                if let Some(ga) = self.accum(grads, *a) {
                    for r in 0..out.rows() {
                        kernels::softmax_backward_row(out.row(r), g.row(r), ga.row_mut(r));
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, cache } => {
                let (r, c) = out.shape();
                let gain_vals = self.value(*gain).data();
                let mut dx = self.rg(*x).then(|| Tensor2::zeros(r, c));
                let mut dg = self.rg(*gain).then(|| Tensor2::zeros(1, c));
                let mut db = self.rg(*bias).then(|| Tensor2::zeros(1, c));
                kernels::layer_norm_backward(
                    g.data(),
                    gain_vals,
                    cache,
                    r,
                    c,
                    dx.as_mut().map(|t| t.data_mut()),
                    dg.as_mut().map(|t| t.data_mut()),
                    db.as_mut().map(|t| t.data_mut()),
                );
                for (v, d) in [(*x, dx), (*gain, dg), (*bias, db)] {
                    if let (Some(d), Some(gv)) = (d, self.accum(grads, v)) {
                        gv.add_assign(&d);
                    }
                }
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                if let Some(ga) = self.accum(grads, *a) {
                    for ((d, &xi), &gi) in ga.data_mut().iter_mut().zip(x).zip(g.data()) {
                        *d += gi * kernels::gelu_grad(xi);
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                weights,
                probs,
            } => {
                let (b, c) = self.value(*logits).shape();
                let upstream = g.data()[0];
                let inv_b = T::one() / T::of(b as f64);
                if let Some(gl) = self.accum(grads, *logits) {
                    let gl = gl.data_mut();
                    for i in 0..b {
                        let w = weights.as_ref().map_or(T::one(), |w| w[i]);
                        let f = upstream * w * inv_b;
                        for j in 0..c {
                            let onehot = if j == labels[i] { T::one() } else { T::zero() };
                            gl[i * c + j] += (probs[i * c + j] - onehot) * f;
                        }
                    }
                }
            }
            Op::Gather(sources) => {
                for (r, &(v, src)) in sources.iter().enumerate() {
                    if let Some(gv) = self.accum(grads, v) {
                        for (d, &x) in gv.row_mut(src).iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Attention { q, k, v, shape, probs } => {
                let (r, c) = out.shape();
                let mut dq = self.rg(*q).then(|| Tensor2::zeros(r, c));
                let mut dk = self.rg(*k).then(|| Tensor2::zeros(r, c));
                let mut dv = self.rg(*v).then(|| Tensor2::zeros(r, c));
                kernels::attention_backward(
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    probs,
                    g.data(),
                    *shape,
                    dq.as_mut().map(|t| t.data_mut()),
                    dk.as_mut().map(|t| t.data_mut()),
                    dv.as_mut().map(|t| t.data_mut()),
                );
                for (var, d) in [(*q, dq), (*k, dk), (*v, dv)] {
                    if let (Some(d), Some(gv)) = (d, self.accum(grads, var)) {
                        gv.add_assign(&d);
                    }
                }
            }
            Op::WeightedSum(a, w) => {
                let upstream = g.data()[0];
                if let Some(ga) = self.accum(grads, *a) {
                    for (d, &wi) in ga.data_mut().iter_mut().zip(w.data()) {
                        *d += wi * upstream;
                    }
                }
            }
        }
    }
}

/// Shape helper for tests and callers that need a zero gradient in place of
/// `None`.
pub fn grad_or_zeros<T: Real>(grads: &Gradients<T>, v: Var, like: &Tensor2<T>) -> Tensor2<T> {
    grads
        .wrt(v)
        .cloned()
        .unwrap_or_else(|| Tensor2::zeros(like.rows(), like.cols()))
}
