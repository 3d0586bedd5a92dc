//! Model checkpoints: a directory holding a text manifest, the parameter
//! blob and, optionally, the optimizer state needed to resume training.
//!
//! `params.bin` is every tensor in canonical order (CLS, positions, each
//! layer's ln1 gain/bias, W_Q, W_K, W_V, W_O, ln2 gain/bias, MLP W1, b1,
//! W2, b2, then head ln gain/bias, W, b, then one pattern bank per
//! attribute) as little-endian f32, row-major, with no framing. The
//! manifest records its sha256 and float count.

use std::path::{Path, PathBuf};

use pat_core::autodiff::{AdamConfig, AdamState, Tensor2};
use pat_core::pat_net::{PatConfig, PatModel, WeightInit};
use pat_core::trainer::{EpochRecord, TrainState};

use crate::binfmt::{sha256_hex, unseal, Reader, Writer};
use crate::config::KeyValues;
use crate::error::{IoContext, PatError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PARAMS_FILE: &str = "params.bin";
pub const STATE_FILE: &str = "train_state.bin";
const STATE_MAGIC: &[u8; 8] = b"PATTRS\0\0";

/// Tokenizer mode the model was trained under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `(D, N)`: PAT.
    Default,
    /// `(D_c, N_c)`: PATC.
    Compact,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Default => "default",
            Mode::Compact => "compact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "default" => Some(Mode::Default),
            "compact" => Some(Mode::Compact),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: PatModel,
    pub attributes: Vec<String>,
    pub mode: Mode,
}

impl Checkpoint {
    pub fn d(&self) -> usize {
        self.model.config.d_model
    }

    pub fn n(&self) -> usize {
        self.model.config.n_tokens
    }
}

pub fn encode_params(model: &PatModel) -> Vec<u8> {
    let mut w = Writer::default();
    for t in model.tensors() {
        w.f32s(t.data());
    }
    w.buf
}

fn decode_params(cfg: PatConfig, bytes: &[u8]) -> Option<Vec<Tensor2<f32>>> {
    let mut r = Reader::new(bytes, 0);
    let tensors = cfg
        .tensor_shapes()
        .into_iter()
        .map(|(rows, cols)| Tensor2::from_vec(rows, cols, r.f32s(rows * cols)?).ok())
        .collect::<Option<Vec<_>>>()?;
    r.at_end().then_some(tensors)
}

fn config_kv(kv: &mut KeyValues, c: &PatConfig) {
    kv.insert("d_model", c.d_model);
    kv.insert("n_tokens", c.n_tokens);
    kv.insert("layers", c.layers);
    kv.insert("heads", c.heads);
    kv.insert("d_head", c.d_head);
    kv.insert("d_mlp", c.d_mlp);
    kv.insert("n_attributes", c.n_attributes);
    kv.insert("n_classes", c.n_classes);
    kv.insert("seed", c.seed);
    kv.insert("patterns", c.patterns);
    kv.insert("mask_padding", c.mask_padding);
    kv.insert("ln_eps", c.ln_eps);
    kv.insert("input_gain", c.input_gain);
    kv.insert("input_center", c.input_center);
    kv.insert("alternate_signs", c.alternate_signs);
    kv.insert(
        "weight_init",
        match c.weight_init {
            WeightInit::FanIn => "fan_in".to_string(),
            WeightInit::Fixed(s) => s.to_string(),
        },
    );
}

fn config_from_kv(kv: &mut KeyValues) -> Result<PatConfig> {
    let d: usize = kv.require("d_model")?;
    let n: usize = kv.require("n_tokens")?;
    let a: usize = kv.require("n_attributes")?;
    let init: String = kv.require("weight_init")?;
    let weight_init = match init.as_str() {
        "fan_in" => WeightInit::FanIn,
        s => WeightInit::Fixed(
            s.parse()
                .map_err(|_| PatError::data(&kv.origin, format!("bad weight_init {s:?}")))?,
        ),
    };
    let cfg = PatConfig {
        layers: kv.require("layers")?,
        heads: kv.require("heads")?,
        d_head: kv.require("d_head")?,
        d_mlp: kv.require("d_mlp")?,
        n_classes: kv.require("n_classes")?,
        seed: kv.require("seed")?,
        patterns: kv.require("patterns")?,
        mask_padding: kv.require("mask_padding")?,
        ln_eps: kv.require("ln_eps")?,
        input_gain: kv.require("input_gain")?,
        input_center: kv.require("input_center")?,
        alternate_signs: kv.require("alternate_signs")?,
        weight_init,
        ..PatConfig::new(d, n, a)
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn render_manifest(ckpt: &Checkpoint, params: &[u8]) -> String {
    let mut kv = KeyValues::default();
    kv.insert("format_version", CHECKPOINT_VERSION);
    kv.insert("mode", ckpt.mode.as_str());
    config_kv(&mut kv, &ckpt.model.config);
    for (j, a) in ckpt.attributes.iter().enumerate() {
        kv.insert(
            &format!("attribute.{j:04}"),
            serde_json::to_string(a).expect("string encodes"),
        );
    }
    kv.insert("params_floats", params.len() / 4);
    kv.insert("params_sha256", sha256_hex(params));
    kv.render()
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    if ckpt.attributes.len() != ckpt.model.config.n_attributes {
        return Err(PatError::Runtime(format!(
            "{} attribute names for {} pattern banks",
            ckpt.attributes.len(),
            ckpt.model.config.n_attributes
        )));
    }
    std::fs::create_dir_all(dir).at(dir)?;
    let params = encode_params(&ckpt.model);
    std::fs::write(dir.join(PARAMS_FILE), &params).at(dir.join(PARAMS_FILE))?;
    let manifest = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest, render_manifest(ckpt, &params)).at(&manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut kv = KeyValues::read(&manifest_path)?;
    let bad = |m: String| PatError::data(&manifest_path, m);
    let version: u32 = kv.require("format_version")?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "checkpoint format {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let mode: String = kv.require("mode")?;
    let mode = Mode::parse(&mode).ok_or_else(|| bad(format!("unknown mode {mode:?}")))?;
    let config = config_from_kv(&mut kv)?;
    let mut attributes = Vec::with_capacity(config.n_attributes);
    for j in 0..config.n_attributes {
        let raw: String = kv.require(&format!("attribute.{j:04}"))?;
        attributes.push(serde_json::from_str(&raw).map_err(|e| bad(format!("attribute {j}: {e}")))?);
    }
    let floats: usize = kv.require("params_floats")?;
    let digest: String = kv.require("params_sha256")?;
    kv.finish()?;
    let params_path = dir.join(PARAMS_FILE);
    let bytes = std::fs::read(&params_path).at(&params_path)?;
    if bytes.len() != floats * 4 || sha256_hex(&bytes) != digest {
        return Err(PatError::data(
            &params_path,
            "parameter blob does not match its manifest",
        ));
    }
    let tensors = decode_params(config, &bytes)
        .ok_or_else(|| PatError::data(&params_path, "parameter blob has the wrong size for its config"))?;
    Ok(Checkpoint {
        model: PatModel::from_tensors(config, tensors)?,
        attributes,
        mode,
    })
}

pub fn state_path(dir: &Path) -> PathBuf {
    dir.join(STATE_FILE)
}

/// Optimizer, schedule position, history and current model: everything in
/// [`TrainState`] besides the best model, which lives in `params.bin`.
pub fn encode_train_state(state: &TrainState) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(STATE_MAGIC);
    w.u32(CHECKPOINT_VERSION as usize);
    w.u64(state.epoch as u64);
    w.u64(state.step as u64);
    w.f64(state.best_f1);
    w.u64(state.best_epoch as u64);
    w.u64(state.since_best as u64);
    match state.class_weights {
        None => w.u8(0),
        Some([a, b]) => {
            w.u8(1);
            w.f32(a);
            w.f32(b);
        }
    }
    w.u64(state.history.len() as u64);
    for r in &state.history {
        w.u64(r.epoch as u64);
        for v in [r.loss, r.precision, r.recall, r.f1, r.lr] {
            w.f64(v);
        }
    }
    let a = &state.adam;
    w.u64(a.t);
    w.f64(a.lr);
    w.f64(a.config.beta1);
    w.f64(a.config.beta2);
    w.f64(a.config.eps);
    for (m, v) in a.m.iter().zip(&a.v) {
        w.f32s(m);
        w.f32s(v);
    }
    for t in state.model.tensors() {
        w.f32s(t.data());
    }
    w.seal()
}

/// Rebuilds a [`TrainState`] around `best`, the checkpoint's parameters.
pub fn decode_train_state(bytes: &[u8], best: PatModel, origin: &Path) -> Result<TrainState> {
    let bad = |m: &str| PatError::data(origin, format!("training state: {m}"));
    if bytes.len() < 12 || &bytes[..8] != STATE_MAGIC {
        return Err(bad("not a training state file"));
    }
    let body = unseal(bytes).ok_or_else(|| bad("checksum mismatch"))?;
    let mut r = Reader::new(body, 8);
    let short = || bad("truncated");
    if r.u32().ok_or_else(short)? != CHECKPOINT_VERSION as usize {
        return Err(bad("format version mismatch"));
    }
    let epoch = r.u64().ok_or_else(short)? as usize;
    let step = r.u64().ok_or_else(short)? as usize;
    let best_f1 = r.f64().ok_or_else(short)?;
    let best_epoch = r.u64().ok_or_else(short)? as usize;
    let since_best = r.u64().ok_or_else(short)? as usize;
    let class_weights = match r.u8().ok_or_else(short)? {
        0 => None,
        1 => Some([r.f32().ok_or_else(short)?, r.f32().ok_or_else(short)?]),
        _ => return Err(bad("bad class weight flag")),
    };
    let n_hist = r.u64().ok_or_else(short)? as usize;
    let mut history = Vec::with_capacity(n_hist.min(1 << 20));
    for _ in 0..n_hist {
        let epoch = r.u64().ok_or_else(short)? as usize;
        let mut v = [0.0; 5];
        for x in &mut v {
            *x = r.f64().ok_or_else(short)?;
        }
        history.push(EpochRecord {
            epoch,
            loss: v[0],
            precision: v[1],
            recall: v[2],
            f1: v[3],
            lr: v[4],
        });
    }
    let t = r.u64().ok_or_else(short)?;
    let lr = r.f64().ok_or_else(short)?;
    let config = AdamConfig {
        beta1: r.f64().ok_or_else(short)?,
        beta2: r.f64().ok_or_else(short)?,
        eps: r.f64().ok_or_else(short)?,
    };
    let sizes: Vec<usize> = best.tensors().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(sizes.iter().copied(), config, lr);
    adam.t = t;
    for (k, &len) in sizes.iter().enumerate() {
        adam.m[k] = r.f32s(len).ok_or_else(short)?;
        adam.v[k] = r.f32s(len).ok_or_else(short)?;
    }
    let tensors = best
        .config
        .tensor_shapes()
        .into_iter()
        .map(|(rows, cols)| Tensor2::from_vec(rows, cols, r.f32s(rows * cols)?).ok())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(short)?;
    if !r.at_end() {
        return Err(bad("trailing bytes"));
    }
    Ok(TrainState {
        model: PatModel::from_tensors(best.config, tensors)?,
        best,
        adam,
        epoch,
        step,
        best_f1,
        best_epoch,
        since_best,
        history,
        class_weights,
    })
}

pub fn save_train_state(dir: &Path, state: &TrainState) -> Result<()> {
    let path = state_path(dir);
    std::fs::write(&path, encode_train_state(state)).at(&path)
}

pub fn load_train_state(dir: &Path, best: PatModel) -> Result<TrainState> {
    let path = state_path(dir);
    let bytes = std::fs::read(&path).at(&path)?;
    decode_train_state(&bytes, best, &path)
}
