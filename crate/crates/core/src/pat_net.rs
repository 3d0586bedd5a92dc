//! The pattern-aware transformer: a CLS token followed by data tokens
//! interleaved with learned per-attribute pattern tokens, a stack of
//! pre-norm encoder layers, and a two-way classification head on CLS.
//!
//! Sequence layout for `N` token slots (`S = 1 + 2N` rows):
//!
//! ```text
//! row 0        CLS
//! row 2k + 1   data token k      (k < N, zero rows past the cell's tokens)
//! row 2k + 2   pattern token k of the cell's attribute
//! ```
//!
//! Learned position embeddings are added to every row.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{AttnShape, Real, Tape, Tensor2, Var, LAYER_NORM_EPS};
use crate::error::{Error, Result};

/// Standard deviation of the Gaussian initializer.
pub const INIT_STD: f64 = 0.02;
/// Standard deviation of projection weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// `1/sqrt(fan_in)`.
    FanIn,
    Fixed(f64),
}

impl WeightInit {
    pub fn std(self, fan_in: usize) -> f64 {
        match self {
            Self::FanIn => 1.0 / libm::sqrt(fan_in as f64),
            Self::Fixed(s) => s,
        }
    }
}

/// Default fixed multiplier on data-token embeddings.
pub const INPUT_GAIN: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatConfig {
    /// Token dimension `D`, also the model width.
    pub d_model: usize,
    /// Token slots `N`.
    pub n_tokens: usize,
    pub layers: usize,
    pub heads: usize,
    /// Per-head width of queries, keys and values.
    pub d_head: usize,
    pub d_mlp: usize,
    pub n_attributes: usize,
    pub n_classes: usize,
    pub seed: u64,
    /// `false` freezes every pattern token at zero (the DT ablation).
    pub patterns: bool,
    /// Mask attention to padding positions.
    pub mask_padding: bool,
    pub ln_eps: f64,
    /// Fixed, untrained scale applied to data tokens before interleaving.
    /// Code-point embeddings are ~1e-3 wide; without a gain LayerNorm sees
    /// little beyond token length. `1.0` feeds them unscaled.
    pub input_gain: f64,
    /// Subtracted from every embedding value before the gain.
    pub input_center: f64,
    /// Negate odd embedding slots before interleaving. LayerNorm cannot see
    /// a constant row offset, and a token filling all `D` slots with
    /// similar code points is nearly constant.
    pub alternate_signs: bool,
    /// Projection weights only; CLS, positions and patterns use `INIT_STD`.
    pub weight_init: WeightInit,
}

impl PatConfig {
    /// Full-size defaults: 6 layers, 8 heads of width 64, MLP width 4D.
    pub fn new(d_model: usize, n_tokens: usize, n_attributes: usize) -> Self {
        Self {
            d_model,
            n_tokens,
            layers: 6,
            heads: 8,
            d_head: 64,
            d_mlp: 4 * d_model,
            n_attributes,
            n_classes: 2,
            seed: 0,
            patterns: true,
            mask_padding: false,
            ln_eps: LAYER_NORM_EPS,
            input_gain: INPUT_GAIN,
            input_center: 0.0,
            alternate_signs: true,
            weight_init: WeightInit::FanIn,
        }
    }

    #[inline]
    pub fn seq_len(&self) -> usize {
        1 + 2 * self.n_tokens
    }

    #[inline]
    pub fn attn_width(&self) -> usize {
        self.heads * self.d_head
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_model", self.d_model),
            ("n_tokens", self.n_tokens),
            ("layers", self.layers),
            ("heads", self.heads),
            ("d_head", self.d_head),
            ("d_mlp", self.d_mlp),
            ("n_attributes", self.n_attributes),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_classes != 2 {
            return Err(Error::Config("n_classes must be 2".into()));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("ln_eps must be positive".into()));
        }
        if !(self.input_gain > 0.0 && self.input_gain.is_finite()) {
            return Err(Error::Config("input_gain must be positive and finite".into()));
        }
        if !self.input_center.is_finite() {
            return Err(Error::Config("input_center must be finite".into()));
        }
        if let WeightInit::Fixed(s) = self.weight_init {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("weight std must be positive and finite".into()));
            }
        }
        Ok(())
    }

    /// Shapes of every tensor in checkpoint order: CLS, position
    /// embeddings, each layer, the head, then one bank per attribute.
    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let (d, w, m) = (self.d_model, self.attn_width(), self.d_mlp);
        let mut s = vec![(1, d), (self.seq_len(), d)];
        for _ in 0..self.layers {
            s.extend([
                (1, d),
                (1, d),
                (d, w),
                (d, w),
                (d, w),
                (w, d),
                (1, d),
                (1, d),
                (d, m),
                (1, m),
                (m, d),
                (1, d),
            ]);
        }
        s.extend([(1, d), (1, d), (d, self.n_classes), (1, self.n_classes)]);
        s.extend((0..self.n_attributes).map(|_| (self.n_tokens, d)));
        s
    }

    /// Trainable parameter count. Pattern banks count only when enabled.
    pub fn n_params(&self) -> usize {
        let all: usize = self.tensor_shapes().iter().map(|(r, c)| r * c).sum();
        if self.patterns {
            all
        } else {
            all - self.n_attributes * self.n_tokens * self.d_model
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T: Real = f32> {
    pub ln1_gain: Tensor2<T>,
    pub ln1_bias: Tensor2<T>,
    pub w_q: Tensor2<T>,
    pub w_k: Tensor2<T>,
    pub w_v: Tensor2<T>,
    pub w_o: Tensor2<T>,
    pub ln2_gain: Tensor2<T>,
    pub ln2_bias: Tensor2<T>,
    pub mlp_w1: Tensor2<T>,
    pub mlp_b1: Tensor2<T>,
    pub mlp_w2: Tensor2<T>,
    pub mlp_b2: Tensor2<T>,
}

impl<T: Real> LayerParams<T> {
    fn tensors(&self) -> [&Tensor2<T>; 12] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_o,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor2<T>; 12] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T: Real = f32> {
    pub ln_gain: Tensor2<T>,
    pub ln_bias: Tensor2<T>,
    pub w: Tensor2<T>,
    pub b: Tensor2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T: Real = f32> {
    pub cls: Tensor2<T>,
    pub pos: Tensor2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub head: HeadParams<T>,
}

/// One `N×D` block of pattern tokens per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternBank<T: Real = f32> {
    pub patterns: Vec<Tensor2<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatModel<T: Real = f32> {
    pub config: PatConfig,
    pub params: ParamSet<T>,
    pub bank: PatternBank<T>,
}

/// Seeded Gaussian weights, unit LayerNorm gains, zero biases. Pattern
/// banks are zero when patterns are disabled.
pub fn init_params<T: Real>(cfg: &PatConfig) -> Result<PatModel<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut gauss = |r: usize, c: usize, std: f64| {
        let data = (0..r * c).map(|_| T::of(std * normal.sample(&mut rng))).collect();
        Tensor2::from_vec(r, c, data).expect("sized")
    };
    let (d, w, m) = (cfg.d_model, cfg.attn_width(), cfg.d_mlp);
    let std = |fan_in: usize| cfg.weight_init.std(fan_in);
    let cls = gauss(1, d, INIT_STD);
    let pos = gauss(cfg.seq_len(), d, INIT_STD);
    let layers = (0..cfg.layers)
        .map(|_| LayerParams {
            ln1_gain: Tensor2::filled(1, d, T::one()),
            ln1_bias: Tensor2::zeros(1, d),
            w_q: gauss(d, w, std(d)),
            w_k: gauss(d, w, std(d)),
            w_v: gauss(d, w, std(d)),
            w_o: gauss(w, d, std(w)),
            ln2_gain: Tensor2::filled(1, d, T::one()),
            ln2_bias: Tensor2::zeros(1, d),
            mlp_w1: gauss(d, m, std(d)),
            mlp_b1: Tensor2::zeros(1, m),
            mlp_w2: gauss(m, d, std(m)),
            mlp_b2: Tensor2::zeros(1, d),
        })
        .collect();
    let head = HeadParams {
        ln_gain: Tensor2::filled(1, d, T::one()),
        ln_bias: Tensor2::zeros(1, d),
        w: gauss(d, cfg.n_classes, std(d)),
        b: Tensor2::zeros(1, cfg.n_classes),
    };
    let patterns = (0..cfg.n_attributes)
        .map(|_| {
            if cfg.patterns {
                gauss(cfg.n_tokens, d, INIT_STD)
            } else {
                Tensor2::zeros(cfg.n_tokens, d)
            }
        })
        .collect();
    Ok(PatModel {
        config: *cfg,
        params: ParamSet { cls, pos, layers, head },
        bank: PatternBank { patterns },
    })
}

impl<T: Real> PatModel<T> {
    /// Every tensor in checkpoint order.
    pub fn tensors(&self) -> Vec<&Tensor2<T>> {
        let p = &self.params;
        let mut v = vec![&p.cls, &p.pos];
        for l in &p.layers {
            v.extend(l.tensors());
        }
        v.extend([&p.head.ln_gain, &p.head.ln_bias, &p.head.w, &p.head.b]);
        v.extend(self.bank.patterns.iter());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        let p = &mut self.params;
        let mut v = vec![&mut p.cls, &mut p.pos];
        for l in &mut p.layers {
            v.extend(l.tensors_mut());
        }
        let h = &mut p.head;
        v.extend([&mut h.ln_gain, &mut h.ln_bias, &mut h.w, &mut h.b]);
        v.extend(self.bank.patterns.iter_mut());
        v
    }

    /// Index of the first pattern bank in [`tensors`](Self::tensors).
    pub fn bank_offset(&self) -> usize {
        2 + 12 * self.config.layers + 4
    }

    /// Whether tensor `i` (checkpoint order) is trained.
    pub fn is_trainable(&self, i: usize) -> bool {
        self.config.patterns || i < self.bank_offset()
    }

    pub fn n_params(&self) -> usize {
        self.tensors()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_trainable(*i))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Rebuilds a model from tensors in checkpoint order.
    pub fn from_tensors(config: PatConfig, tensors: Vec<Tensor2<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.tensor_shapes();
        if tensors.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "{} tensors for a model of {}",
                tensors.len(),
                shapes.len()
            )));
        }
        for (i, (t, s)) in tensors.iter().zip(&shapes).enumerate() {
            if t.shape() != *s {
                return Err(Error::Shape(format!("tensor {i} is {:?}, expected {s:?}", t.shape())));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("count checked");
        let cls = next();
        let pos = next();
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                ln1_gain: next(),
                ln1_bias: next(),
                w_q: next(),
                w_k: next(),
                w_v: next(),
                w_o: next(),
                ln2_gain: next(),
                ln2_bias: next(),
                mlp_w1: next(),
                mlp_b1: next(),
                mlp_w2: next(),
                mlp_b2: next(),
            })
            .collect();
        let head = HeadParams {
            ln_gain: next(),
            ln_bias: next(),
            w: next(),
            b: next(),
        };
        let patterns = (0..config.n_attributes).map(|_| next()).collect();
        Ok(Self {
            config,
            params: ParamSet { cls, pos, layers, head },
            bank: PatternBank { patterns },
        })
    }

    pub fn cast<U: Real>(&self) -> PatModel<U> {
        let tensors = self.tensors().into_iter().map(|t| t.cast::<U>()).collect();
        PatModel::from_tensors(self.config, tensors).expect("same config")
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }
}

/// One classification input: the `N×D` data embedding of a cell, its
/// attribute and its real token count.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'s, T: Real = f32> {
    pub embedding: &'s Tensor2<T>,
    pub attr: usize,
    pub tokens: usize,
}

struct LayerVars {
    ln1: (Var, Var),
    w_q: Var,
    w_k: Var,
    w_v: Var,
    w_o: Var,
    ln2: (Var, Var),
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

/// Tape handles for every model tensor.
pub struct ModelVars {
    cls: Var,
    pos: Var,
    layers: Vec<LayerVars>,
    head: [Var; 4],
    banks: Vec<Var>,
}

impl ModelVars {
    /// Groups handles listed in checkpoint order.
    pub fn from_slice(cfg: &PatConfig, vars: &[Var]) -> Result<Self> {
        let want = cfg.tensor_shapes().len();
        if vars.len() != want {
            return Err(Error::Shape(format!("{} vars for {want} tensors", vars.len())));
        }
        let layers = (0..cfg.layers)
            .map(|l| {
                let v = &vars[2 + 12 * l..2 + 12 * (l + 1)];
                LayerVars {
                    ln1: (v[0], v[1]),
                    w_q: v[2],
                    w_k: v[3],
                    w_v: v[4],
                    w_o: v[5],
                    ln2: (v[6], v[7]),
                    w1: v[8],
                    b1: v[9],
                    w2: v[10],
                    b2: v[11],
                }
            })
            .collect();
        let h = 2 + 12 * cfg.layers;
        Ok(Self {
            cls: vars[0],
            pos: vars[1],
            layers,
            head: [vars[h], vars[h + 1], vars[h + 2], vars[h + 3]],
            banks: vars[h + 4..].to_vec(),
        })
    }

    /// Puts the model on the tape. With `trainable`, every trained tensor
    /// becomes a gradient leaf; otherwise all are constants.
    pub fn bind<'a, T: Real>(tape: &mut Tape<'a, T>, model: &'a PatModel<T>, trainable: bool) -> Self {
        let vars: Vec<Var> = model
            .tensors()
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                if trainable && model.is_trainable(i) {
                    tape.param(t)
                } else {
                    tape.constant_ref(t)
                }
            })
            .collect();
        Self::from_slice(&model.config, &vars).expect("checkpoint order")
    }

    /// Handles in checkpoint order.
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![self.cls, self.pos];
        for l in &self.layers {
            v.extend([
                l.ln1.0, l.ln1.1, l.w_q, l.w_k, l.w_v, l.w_o, l.ln2.0, l.ln2.1, l.w1, l.b1, l.w2, l.b2,
            ]);
        }
        v.extend(self.head);
        v.extend(&self.banks);
        v
    }
}

/// Tape handles produced by a batched forward pass.
pub struct BatchOutput {
    /// `B×2` logits.
    pub logits: Var,
    /// Attention node per layer; see [`Tape::attention_probs`].
    pub attention: Vec<Var>,
}

/// Interleaves CLS, data and pattern rows for every sample and adds the
/// position embeddings. Result is `(B·S)×D`.
pub fn assemble_batch<T: Real>(
    tape: &mut Tape<'_, T>,
    vars: &ModelVars,
    cfg: &PatConfig,
    batch: &[Sample<'_, T>],
) -> Result<Var> {
    let (n, d, s) = (cfg.n_tokens, cfg.d_model, cfg.seq_len());
    let gain: Vec<T> = (0..d)
        .map(|c| {
            let sign = if cfg.alternate_signs && c % 2 == 1 { -1.0 } else { 1.0 };
            T::of(sign * cfg.input_gain)
        })
        .collect();
    let center = T::of(cfg.input_center);
    let mut data = Vec::with_capacity(batch.len() * n * d);
    for x in batch {
        if x.embedding.shape() != (n, d) {
            return Err(Error::Shape(format!(
                "cell embedding is {:?}, model expects {n}x{d}",
                x.embedding.shape()
            )));
        }
        if x.attr >= cfg.n_attributes {
            return Err(Error::AttributeOutOfRange {
                id: x.attr,
                count: cfg.n_attributes,
            });
        }
        data.extend(
            x.embedding
                .data()
                .iter()
                .zip(gain.iter().cycle())
                .map(|(&v, &g)| (v - center) * g),
        );
    }
    let data = tape.constant(Tensor2::from_vec(batch.len() * n, d, data)?);
    let mut rows = Vec::with_capacity(batch.len() * s);
    let mut pos_rows = Vec::with_capacity(batch.len() * s);
    for (b, x) in batch.iter().enumerate() {
        rows.push((vars.cls, 0));
        for k in 0..n {
            rows.push((data, b * n + k));
            rows.push((vars.banks[x.attr], k));
        }
        pos_rows.extend((0..s).map(|r| (vars.pos, r)));
    }
    let z = tape.gather_rows(rows)?;
    let pos = tape.gather_rows(pos_rows)?;
    tape.add(z, pos)
}

fn encoder_layer_on_tape<T: Real>(
    tape: &mut Tape<'_, T>,
    l: &LayerVars,
    cfg: &PatConfig,
    z: Var,
    batch: usize,
    valid: Option<&[usize]>,
) -> Result<(Var, Var)> {
    let eps = T::of(cfg.ln_eps);
    let x = tape.layer_norm(z, l.ln1.0, l.ln1.1, eps)?;
    let q = tape.matmul(x, l.w_q)?;
    let k = tape.matmul(x, l.w_k)?;
    let v = tape.matmul(x, l.w_v)?;
    let shape = AttnShape {
        batch,
        seq: cfg.seq_len(),
        heads: cfg.heads,
        d_head: cfg.d_head,
    };
    let attn = tape.attention(q, k, v, shape, valid)?;
    let o = tape.matmul(attn, l.w_o)?;
    let z1 = tape.add(o, z)?;
    let x2 = tape.layer_norm(z1, l.ln2.0, l.ln2.1, eps)?;
    let h = tape.matmul(x2, l.w1)?;
    let h = tape.add_row(h, l.b1)?;
    let h = tape.gelu(h);
    let m = tape.matmul(h, l.w2)?;
    let m = tape.add_row(m, l.b2)?;
    Ok((tape.add(m, z1)?, attn))
}

/// Full forward pass for a batch of samples.
pub fn forward_batch<T: Real>(
    tape: &mut Tape<'_, T>,
    vars: &ModelVars,
    cfg: &PatConfig,
    batch: &[Sample<'_, T>],
) -> Result<BatchOutput> {
    if batch.is_empty() {
        return Err(Error::Empty("forward on an empty batch"));
    }
    let valid: Option<Vec<usize>> = cfg
        .mask_padding
        .then(|| batch.iter().map(|x| 1 + 2 * x.tokens.min(cfg.n_tokens)).collect());
    let mut z = assemble_batch(tape, vars, cfg, batch)?;
    let mut attention = Vec::with_capacity(cfg.layers);
    for l in &vars.layers {
        let (next, attn) = encoder_layer_on_tape(tape, l, cfg, z, batch.len(), valid.as_deref())?;
        z = next;
        attention.push(attn);
    }
    let s = cfg.seq_len();
    let cls = tape.gather_rows((0..batch.len()).map(|b| (z, b * s)).collect())?;
    let [g, b, w, bias] = vars.head;
    let h = tape.layer_norm(cls, g, b, T::of(cfg.ln_eps))?;
    let logits = tape.matmul(h, w)?;
    let logits = tape.add_row(logits, bias)?;
    Ok(BatchOutput { logits, attention })
}

/// Attention probabilities of every layer and head for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace<T = f32> {
    pub layers: usize,
    pub heads: usize,
    pub seq: usize,
    /// `[layer][head][query][key]`.
    pub scores: Vec<T>,
}

impl<T: Real> AttentionTrace<T> {
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.layers, self.heads, self.seq, self.seq)
    }

    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[T] {
        let off = ((layer * self.heads + head) * self.seq + query) * self.seq;
        &self.scores[off..off + self.seq]
    }

    pub fn matrix(&self, layer: usize, head: usize) -> Tensor2<T> {
        let off = (layer * self.heads + head) * self.seq * self.seq;
        let block = self.scores[off..off + self.seq * self.seq].to_vec();
        Tensor2::from_vec(self.seq, self.seq, block).expect("square block")
    }

    fn from_tape(tape: &Tape<'_, T>, attention: &[Var], b: usize) -> Self {
        let mut scores = Vec::new();
        let (mut heads, mut seq) = (0, 0);
        for &a in attention {
            let (probs, shape) = tape.attention_probs(a).expect("attention node");
            heads = shape.heads;
            seq = shape.seq;
            for h in 0..shape.heads {
                let off = shape.block(b, h);
                scores.extend_from_slice(&probs[off..off + seq * seq]);
            }
        }
        Self {
            layers: attention.len(),
            heads,
            seq,
            scores,
        }
    }
}

/// Per-sample logits and attention traces.
pub type Inference<T> = (Vec<[T; 2]>, Vec<AttentionTrace<T>>);

/// Inference on a batch: per-sample logits and, when asked, traces.
pub fn infer_batch<T: Real>(model: &PatModel<T>, batch: &[Sample<'_, T>], traces: bool) -> Result<Inference<T>> {
    let mut tape = Tape::new();
    let vars = ModelVars::bind(&mut tape, model, false);
    let out = forward_batch(&mut tape, &vars, &model.config, batch)?;
    let l = tape.value(out.logits);
    let logits = (0..batch.len()).map(|b| [l.get(b, 0), l.get(b, 1)]).collect();
    let traces = if traces {
        (0..batch.len())
            .map(|b| AttentionTrace::from_tape(&tape, &out.attention, b))
            .collect()
    } else {
        Vec::new()
    };
    Ok((logits, traces))
}

/// Logits and attention trace for a single cell.
pub fn forward<T: Real>(
    model: &PatModel<T>,
    embedding: &Tensor2<T>,
    attr: usize,
    tokens: usize,
) -> Result<([T; 2], AttentionTrace<T>)> {
    let sample = Sample {
        embedding,
        attr,
        tokens,
    };
    let (mut logits, mut traces) = infer_batch(model, &[sample], true)?;
    Ok((logits.remove(0), traces.remove(0)))
}

/// The `S×D` input matrix of one cell, without running the encoder.
pub fn assemble_input<T: Real>(model: &PatModel<T>, embedding: &Tensor2<T>, attr: usize) -> Result<Tensor2<T>> {
    let mut tape = Tape::new();
    let vars = ModelVars::bind(&mut tape, model, false);
    let sample = Sample {
        embedding,
        attr,
        tokens: model.config.n_tokens,
    };
    let z = assemble_batch(&mut tape, &vars, &model.config, &[sample])?;
    Ok(tape.value(z).clone())
}

/// Applies one encoder layer to a single `S×D` input; returns the output
/// and the per-head attention matrices.
pub fn encoder_layer<T: Real>(
    z: &Tensor2<T>,
    layer: &LayerParams<T>,
    cfg: &PatConfig,
) -> Result<(Tensor2<T>, Vec<Tensor2<T>>)> {
    if z.cols() != cfg.d_model || z.rows() == 0 {
        return Err(Error::Shape(format!("encoder input {:?}", z.shape())));
    }
    let mut tape = Tape::new();
    let t = layer.tensors().map(|t| tape.constant_ref(t));
    let l = LayerVars {
        ln1: (t[0], t[1]),
        w_q: t[2],
        w_k: t[3],
        w_v: t[4],
        w_o: t[5],
        ln2: (t[6], t[7]),
        w1: t[8],
        b1: t[9],
        w2: t[10],
        b2: t[11],
    };
    let zv = tape.constant_ref(z);
    let cfg = PatConfig {
        n_tokens: (z.rows() - 1) / 2,
        ..*cfg
    };
    if cfg.seq_len() != z.rows() {
        return Err(Error::Shape(format!("sequence length {} is not 1 + 2N", z.rows())));
    }
    let (out, attn) = encoder_layer_on_tape(&mut tape, &l, &cfg, zv, 1, None)?;
    let trace = AttentionTrace::from_tape(&tape, &[attn], 0);
    let mats = (0..cfg.heads).map(|h| trace.matrix(0, h)).collect();
    Ok((tape.value(out).clone(), mats))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub error: bool,
    /// Softmax probability of the predicted class.
    pub confidence: f64,
}

/// Argmax over `[clean, error]` logits; ties go to clean.
pub fn predict<T: Real>(logits: [T; 2]) -> Prediction {
    let (a, b) = (logits[0].as_f64(), logits[1].as_f64());
    let error = b > a;
    let margin = if error { b - a } else { a - b };
    Prediction {
        error,
        confidence: 1.0 / (1.0 + libm::exp(-margin)),
    }
}
