//! `key = value` config files for every profiler, model and trainer knob.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.
//! Floats are written with the shortest representation that parses back
//! to the same value, so a written file round-trips exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use pat_core::corpus::SplitRatios;
use pat_core::explain::DEFAULT_ETA;
use pat_core::pat_net::{PatConfig, WeightInit, INPUT_GAIN};
use pat_core::profiler::{BinPolicy, CorpusProfile, HyperParams, ProfilerConfig};
use pat_core::trainer::{ClassWeighting, TrainConfig};

use crate::error::{IoContext, PatError, Result};

/// Ordered `key -> value` pairs with the file they came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pub origin: String,
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PatError::data(origin, format!("line {}: expected key = value", k + 1)))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(PatError::data(origin, format!("line {}: empty key", k + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(PatError::data(origin, format!("line {}: duplicate key `{key}`", k + 1)));
            }
        }
        Ok(Self {
            origin: origin.to_string(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Removes and parses `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| PatError::data(&self.origin, format!("`{key}`: cannot parse {v:?}"))),
        }
    }

    pub fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.take(key)?
            .ok_or_else(|| PatError::data(&self.origin, format!("missing key `{key}`")))
    }

    /// Fails on any key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(k) => Err(PatError::data(&self.origin, format!("unknown key `{k}`"))),
        }
    }

    pub fn render(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }
}

/// Model knobs not derived from the data. `d_mlp = None` means `4D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelKnobs {
    pub layers: usize,
    pub heads: usize,
    pub d_head: usize,
    pub d_mlp: Option<usize>,
    pub patterns: bool,
    pub mask_padding: bool,
    pub ln_eps: f64,
    pub input_gain: f64,
    pub input_center: f64,
    pub alternate_signs: bool,
    pub weight_init: WeightInit,
}

impl Default for ModelKnobs {
    fn default() -> Self {
        let base = PatConfig::new(1, 1, 1);
        Self {
            layers: 2,
            heads: 4,
            d_head: 8,
            d_mlp: None,
            patterns: base.patterns,
            mask_padding: base.mask_padding,
            ln_eps: base.ln_eps,
            input_gain: INPUT_GAIN,
            input_center: base.input_center,
            alternate_signs: base.alternate_signs,
            weight_init: base.weight_init,
        }
    }
}

impl ModelKnobs {
    pub fn pat_config(&self, d: usize, n: usize, n_attributes: usize, seed: u64) -> PatConfig {
        PatConfig {
            layers: self.layers,
            heads: self.heads,
            d_head: self.d_head,
            d_mlp: self.d_mlp.unwrap_or(4 * d),
            seed,
            patterns: self.patterns,
            mask_padding: self.mask_padding,
            ln_eps: self.ln_eps,
            input_gain: self.input_gain,
            input_center: self.input_center,
            alternate_signs: self.alternate_signs,
            weight_init: self.weight_init,
            ..PatConfig::new(d, n, n_attributes)
        }
    }
}

/// Every tunable knob of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub profiler: ProfilerConfig,
    pub model: ModelKnobs,
    pub train: TrainConfig,
    pub split: SplitRatios,
    pub eta: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            profiler: ProfilerConfig::default(),
            model: ModelKnobs::default(),
            train: TrainConfig::default(),
            split: SplitRatios::default(),
            eta: DEFAULT_ETA,
        }
    }
}

fn parse_bins(s: &str) -> Option<BinPolicy> {
    match s {
        "unit" => Some(BinPolicy::UnitInteger),
        _ => s.parse().ok().filter(|&k| k > 0).map(BinPolicy::Count),
    }
}

fn bins_str(b: BinPolicy) -> String {
    match b {
        BinPolicy::UnitInteger => "unit".into(),
        BinPolicy::Count(k) => k.to_string(),
    }
}

fn parse_weighting(s: &str) -> Option<ClassWeighting> {
    match s {
        "auto" => Some(ClassWeighting::Auto),
        "on" => Some(ClassWeighting::On),
        "off" => Some(ClassWeighting::Off),
        _ => None,
    }
}

fn weighting_str(w: ClassWeighting) -> &'static str {
    match w {
        ClassWeighting::Auto => "auto",
        ClassWeighting::On => "on",
        ClassWeighting::Off => "off",
    }
}

/// `fan_in` or a positive standard deviation.
fn parse_init(s: &str) -> Option<WeightInit> {
    match s {
        "fan_in" => Some(WeightInit::FanIn),
        _ => s.parse().ok().map(WeightInit::Fixed),
    }
}

fn init_str(w: WeightInit) -> String {
    match w {
        WeightInit::FanIn => "fan_in".into(),
        WeightInit::Fixed(s) => s.to_string(),
    }
}

impl Settings {
    /// Overrides defaults with every known key of `kv`, consuming them.
    pub fn absorb(&mut self, kv: &mut KeyValues) -> Result<()> {
        let p = &mut self.profiler;
        kv.take_into("beta", &mut p.beta)?;
        kv.take_into("beta_c", &mut p.beta_c)?;
        kv.take_into("mu_l", &mut p.mu_l)?;
        kv.take_into("mu_r", &mut p.mu_r)?;
        kv.take_into("mu_cl", &mut p.mu_cl)?;
        kv.take_into("mu_cr", &mut p.mu_cr)?;
        kv.take_into("mu_long", &mut p.mu_long)?;
        let origin = kv.origin.clone();
        let bad = |key: &str, v: &str| PatError::data(&origin, format!("`{key}`: cannot parse {v:?}"));
        if let Some(v) = kv.take::<String>("bins")? {
            p.bins = parse_bins(&v).ok_or_else(|| bad("bins", &v))?;
        }
        let m = &mut self.model;
        kv.take_into("layers", &mut m.layers)?;
        kv.take_into("heads", &mut m.heads)?;
        kv.take_into("d_head", &mut m.d_head)?;
        if let Some(v) = kv.take::<String>("d_mlp")? {
            m.d_mlp = match v.as_str() {
                "4d" => None,
                _ => Some(v.parse().map_err(|_| bad("d_mlp", &v))?),
            };
        }
        kv.take_into("patterns", &mut m.patterns)?;
        kv.take_into("mask_padding", &mut m.mask_padding)?;
        kv.take_into("ln_eps", &mut m.ln_eps)?;
        kv.take_into("input_gain", &mut m.input_gain)?;
        kv.take_into("input_center", &mut m.input_center)?;
        kv.take_into("alternate_signs", &mut m.alternate_signs)?;
        if let Some(v) = kv.take::<String>("weight_init")? {
            m.weight_init = parse_init(&v).ok_or_else(|| bad("weight_init", &v))?;
        }
        let t = &mut self.train;
        kv.take_into("epochs", &mut t.epochs)?;
        kv.take_into("batch_size", &mut t.batch_size)?;
        kv.take_into("lr0", &mut t.lr0)?;
        kv.take_into("lr_floor", &mut t.lr_floor)?;
        kv.take_into("patience", &mut t.patience)?;
        if let Some(v) = kv.take::<String>("class_weighting")? {
            t.class_weighting = parse_weighting(&v).ok_or_else(|| bad("class_weighting", &v))?;
        }
        kv.take_into("adam_beta1", &mut t.adam.beta1)?;
        kv.take_into("adam_beta2", &mut t.adam.beta2)?;
        kv.take_into("adam_eps", &mut t.adam.eps)?;
        kv.take_into("split_train", &mut self.split.train)?;
        kv.take_into("split_val", &mut self.split.val)?;
        kv.take_into("split_test", &mut self.split.test)?;
        kv.take_into("eta", &mut self.eta)?;
        Ok(())
    }

    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let mut s = Self::default();
        s.absorb(&mut kv)?;
        kv.finish()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.profiler.validate()?;
        self.train.validate()?;
        self.split.validate()?;
        if let WeightInit::Fixed(s) = self.model.weight_init {
            if !(s > 0.0) {
                return Err(PatError::Usage(
                    "weight_init must be fan_in or a positive number".into(),
                ));
            }
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(PatError::Usage("eta must be positive".into()));
        }
        let m = &self.model;
        if m.layers == 0 || m.heads == 0 || m.d_head == 0 || m.d_mlp == Some(0) {
            return Err(PatError::Usage(
                "layers, heads, d_head and d_mlp must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        let p = &self.profiler;
        kv.insert("beta", p.beta);
        kv.insert("beta_c", p.beta_c);
        kv.insert("mu_l", p.mu_l);
        kv.insert("mu_r", p.mu_r);
        kv.insert("mu_cl", p.mu_cl);
        kv.insert("mu_cr", p.mu_cr);
        kv.insert("mu_long", p.mu_long);
        kv.insert("bins", bins_str(p.bins));
        let m = &self.model;
        kv.insert("layers", m.layers);
        kv.insert("heads", m.heads);
        kv.insert("d_head", m.d_head);
        kv.insert("d_mlp", m.d_mlp.map_or("4d".to_string(), |v| v.to_string()));
        kv.insert("patterns", m.patterns);
        kv.insert("mask_padding", m.mask_padding);
        kv.insert("ln_eps", m.ln_eps);
        kv.insert("input_gain", m.input_gain);
        kv.insert("input_center", m.input_center);
        kv.insert("alternate_signs", m.alternate_signs);
        kv.insert("weight_init", init_str(m.weight_init));
        let t = &self.train;
        kv.insert("epochs", t.epochs);
        kv.insert("batch_size", t.batch_size);
        kv.insert("lr0", t.lr0);
        kv.insert("lr_floor", t.lr_floor);
        kv.insert("patience", t.patience);
        kv.insert("class_weighting", weighting_str(t.class_weighting));
        kv.insert("adam_beta1", t.adam.beta1);
        kv.insert("adam_beta2", t.adam.beta2);
        kv.insert("adam_eps", t.adam.eps);
        kv.insert("split_train", self.split.train);
        kv.insert("split_val", self.split.val);
        kv.insert("split_test", self.split.test);
        kv.insert("eta", self.eta);
        kv
    }
}

/// Tokenizer hyperparameters plus the corpus statistics behind them.
pub fn hyper_params_to_kv(hp: &HyperParams, profile: &CorpusProfile, cfg: &ProfilerConfig) -> KeyValues {
    let mut kv = KeyValues::default();
    kv.insert("d", hp.d);
    kv.insert("n", hp.n);
    kv.insert("d_c", hp.d_c);
    kv.insert("n_c", hp.n_c);
    kv.insert("s_long", hp.s_long);
    kv.insert("cells", profile.n_cells());
    kv.insert("vocab_size", profile.vocab.len());
    kv.insert(
        "max_token_count",
        profile.token_counts.iter().max().copied().unwrap_or(0),
    );
    kv.insert(
        "max_token_length",
        profile.token_lengths.iter().max().copied().unwrap_or(0),
    );
    kv.insert(
        "max_cell_length",
        profile.cell_lengths.iter().max().copied().unwrap_or(0),
    );
    kv.insert("beta", cfg.beta);
    kv.insert("beta_c", cfg.beta_c);
    kv.insert("mu_l", cfg.mu_l);
    kv.insert("mu_r", cfg.mu_r);
    kv.insert("mu_cl", cfg.mu_cl);
    kv.insert("mu_cr", cfg.mu_cr);
    kv.insert("mu_long", cfg.mu_long);
    kv
}

const PROFILE_STAT_KEYS: [&str; 5] = [
    "cells",
    "vocab_size",
    "max_token_count",
    "max_token_length",
    "max_cell_length",
];

/// Reads `d`, `n`, `d_c`, `n_c` (and optional `s_long`). Statistics are
/// ignored; profiler knobs are left for [`Settings::absorb`].
pub fn hyper_params_from_kv(kv: &mut KeyValues) -> Result<HyperParams> {
    let hp = HyperParams {
        d: kv.require("d")?,
        n: kv.require("n")?,
        d_c: kv.require("d_c")?,
        n_c: kv.require("n_c")?,
        s_long: kv.take("s_long")?.unwrap_or(0),
    };
    for k in PROFILE_STAT_KEYS {
        kv.take::<String>(k)?;
    }
    check_hyper_params(&hp).map_err(|m| PatError::data(&kv.origin, m))?;
    Ok(hp)
}

pub fn check_hyper_params(hp: &HyperParams) -> std::result::Result<(), String> {
    if hp.d == 0 || hp.n == 0 || hp.d_c == 0 || hp.n_c == 0 {
        return Err("d, n, d_c and n_c must be positive".into());
    }
    Ok(())
}
