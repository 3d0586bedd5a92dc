//! Mini-batch training with Adam, a cosine learning-rate schedule and
//! early stopping on validation F1, plus the FLOP cost estimator.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{adam_step, cosine_lr, AdamConfig, AdamState, Tape, Tensor2};
use crate::corpus::{LabelMask, Table};
use crate::error::{Error, Result};
use crate::evalkit::Metrics;
use crate::pat_net::{forward_batch, infer_batch, predict, ModelVars, PatConfig, PatModel, Sample};
use crate::qta::Lexicon;

/// Upper bound on samples per inference pass during evaluation.
const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeighting {
    /// Inverse-frequency weights when the training error rate is below 10%.
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_floor: f64,
    /// Epochs without a validation F1 improvement before stopping.
    pub patience: usize,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            lr0: 0.002,
            lr_floor: 0.0,
            patience: 10,
            class_weighting: ClassWeighting::Auto,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr0 > self.lr_floor && self.lr_floor >= 0.0) {
            return Err(Error::Config(format!(
                "need lr0 > lr_floor >= 0, got {} and {}",
                self.lr0, self.lr_floor
            )));
        }
        Ok(())
    }
}

/// A tokenized cell with its attribute and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub embedding: Tensor2<f32>,
    pub attr: usize,
    pub tokens: usize,
    pub label: bool,
}

impl Example {
    pub fn sample(&self) -> Sample<'_> {
        Sample {
            embedding: &self.embedding,
            attr: self.attr,
            tokens: self.tokens,
        }
    }
}

/// Row-major examples for every cell of `table`. Without a mask every
/// label is clean.
pub fn build_examples(table: &Table, mask: Option<&LabelMask>, lexicon: &mut Lexicon) -> Result<Vec<Example>> {
    if let Some(m) = mask {
        if !m.matches(table) {
            return Err(Error::Shape("label mask does not match table".into()));
        }
    }
    Ok(table
        .cells()
        .map(|(i, j, cell)| {
            let tc = lexicon.get_or_insert(cell);
            Example {
                embedding: tc.embedding.clone(),
                attr: j,
                tokens: tc.token_count(),
                label: mask.is_some_and(|m| m.get(i, j)),
            }
        })
        .collect())
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub lr: f64,
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: PatModel,
    pub best: PatModel,
    pub adam: AdamState<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub step: usize,
    pub best_f1: f64,
    pub best_epoch: usize,
    pub since_best: usize,
    pub history: Vec<EpochRecord>,
    /// Per-class loss weights `[clean, error]`, fixed at start.
    pub class_weights: Option<[f32; 2]>,
}

impl TrainState {
    pub fn new(model: PatModel, cfg: &TrainConfig, train: &[&Example]) -> Result<Self> {
        cfg.validate()?;
        model.config.validate()?;
        if train.is_empty() {
            return Err(Error::Empty("training split is empty"));
        }
        let sizes = model.tensors().iter().map(|t| t.len()).collect::<Vec<_>>();
        let errors = train.iter().filter(|e| e.label).count();
        let rate = errors as f64 / train.len() as f64;
        let weighted = match cfg.class_weighting {
            ClassWeighting::On => true,
            ClassWeighting::Off => false,
            ClassWeighting::Auto => rate < 0.1,
        };
        let class_weights = (weighted && errors > 0 && errors < train.len()).then(|| {
            let n = train.len() as f64;
            [
                (n / (2.0 * (n - errors as f64))) as f32,
                (n / (2.0 * errors as f64)) as f32,
            ]
        });
        Ok(Self {
            best: model.clone(),
            model,
            adam: AdamState::new(sizes, cfg.adam, cfg.lr0),
            epoch: 0,
            step: 0,
            best_f1: f64::NEG_INFINITY,
            best_epoch: 0,
            since_best: 0,
            history: Vec::new(),
            class_weights,
        })
    }

    /// Whether the epoch budget or the patience is exhausted.
    pub fn finished(&self, cfg: &TrainConfig) -> bool {
        self.epoch >= cfg.epochs || (self.epoch > 0 && self.since_best >= cfg.patience)
    }
}

pub fn steps_per_epoch(n_train: usize, batch_size: usize) -> usize {
    n_train.div_ceil(batch_size.max(1))
}

/// Shuffled training order of `epoch`, a function of the seed and epoch only.
fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mix = seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
    order
}

/// Loss and parameter update on one batch. Returns the batch loss.
pub fn train_step(state: &mut TrainState, batch: &[&Example], lr: f64) -> Result<f64> {
    let labels: Vec<usize> = batch.iter().map(|e| usize::from(e.label)).collect();
    let weights: Option<Vec<f32>> = state.class_weights.map(|w| labels.iter().map(|&l| w[l]).collect());
    let (loss, grads) = {
        let mut tape = Tape::new();
        let vars = ModelVars::bind(&mut tape, &state.model, true);
        let samples: Vec<Sample> = batch.iter().map(|e| e.sample()).collect();
        let out = forward_batch(&mut tape, &vars, &state.model.config, &samples)?;
        let loss = tape.cross_entropy(out.logits, &labels, weights.as_deref())?;
        let value = tape.value(loss).data()[0] as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss {value} at epoch {} step {}",
                state.epoch + 1,
                state.step
            )));
        }
        let mut g = tape.backward(loss)?;
        let grads: Vec<Option<Tensor2<f32>>> = vars.all().into_iter().map(|v| g.take(v)).collect();
        (value, grads)
    };
    state.adam.lr = lr;
    let grad_refs: Vec<Option<&Tensor2<f32>>> = grads.iter().map(Option::as_ref).collect();
    let mut params = state.model.tensors_mut();
    adam_step(&mut params, &grad_refs, &mut state.adam)?;
    state.step += 1;
    Ok(loss)
}

/// Predictions for `examples` with frozen parameters.
pub fn predict_examples(model: &PatModel, examples: &[&Example]) -> Result<Vec<(bool, f64)>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_BATCH) {
        let samples: Vec<Sample> = chunk.iter().map(|e| e.sample()).collect();
        let (logits, _) = infer_batch(model, &samples, false)?;
        out.extend(logits.into_iter().map(|l| {
            let p = predict(l);
            (p.error, p.confidence)
        }));
    }
    Ok(out)
}

pub fn evaluate(model: &PatModel, examples: &[&Example]) -> Result<Metrics> {
    let preds = predict_examples(model, examples)?;
    Ok(Metrics::from_pairs(
        preds.iter().zip(examples).map(|(p, e)| (p.0, e.label)),
    ))
}

/// Runs one epoch and updates early-stopping bookkeeping. Validation falls
/// back to the training examples when `val` is empty.
pub fn run_epoch(
    state: &mut TrainState,
    cfg: &TrainConfig,
    train: &[&Example],
    val: &[&Example],
) -> Result<EpochRecord> {
    let per_epoch = steps_per_epoch(train.len(), cfg.batch_size);
    let total = cfg.epochs * per_epoch;
    let order = epoch_order(train.len(), cfg.seed, state.epoch);
    let mut loss_sum = 0.0;
    let mut lr = cfg.lr0;
    for idx in order.chunks(cfg.batch_size) {
        let batch: Vec<&Example> = idx.iter().map(|&i| train[i]).collect();
        lr = cosine_lr(state.step.min(total), total, cfg.lr0, cfg.lr_floor);
        loss_sum += train_step(state, &batch, lr)? * batch.len() as f64;
    }
    state.epoch += 1;
    let m = evaluate(&state.model, if val.is_empty() { train } else { val })?;
    if m.f1 > state.best_f1 {
        state.best_f1 = m.f1;
        state.best_epoch = state.epoch;
        state.best = state.model.clone();
        state.since_best = 0;
    } else {
        state.since_best += 1;
    }
    let record = EpochRecord {
        epoch: state.epoch,
        loss: loss_sum / train.len() as f64,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        lr,
    };
    state.history.push(record);
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation F1.
    pub model: PatModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_f1: f64,
    pub state: TrainState,
}

/// Trains until the epoch budget or the patience runs out.
pub fn train(model: PatModel, cfg: &TrainConfig, train: &[&Example], val: &[&Example]) -> Result<TrainOutcome> {
    let state = TrainState::new(model, cfg, train)?;
    resume(state, cfg, train, val)
}

/// Continues training from a saved state.
pub fn resume(mut state: TrainState, cfg: &TrainConfig, train: &[&Example], val: &[&Example]) -> Result<TrainOutcome> {
    for e in train.iter().chain(val) {
        if e.attr >= state.model.config.n_attributes {
            return Err(Error::AttributeOutOfRange {
                id: e.attr,
                count: state.model.config.n_attributes,
            });
        }
    }
    while !state.finished(cfg) {
        run_epoch(&mut state, cfg, train, val)?;
    }
    Ok(TrainOutcome {
        model: state.best.clone(),
        history: state.history.clone(),
        best_epoch: state.best_epoch,
        best_f1: state.best_f1,
        state,
    })
}

/// Parameter and FLOP counts of a model configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostReport {
    pub n_params: u64,
    pub tokens_per_sequence: u64,
    /// `6 · tokens_per_sequence · n_params`.
    pub flops_per_sequence: u64,
    pub train_cells: u64,
    pub flops_per_epoch: u64,
    pub epochs: u64,
    pub flops_per_run: u64,
}

pub fn cost_estimate(cfg: &PatConfig, train_cells: usize, epochs: usize) -> Result<CostReport> {
    cfg.validate()?;
    let n_params = cfg.n_params() as u64;
    let tokens = cfg.seq_len() as u64;
    let per_seq = 6 * tokens * n_params;
    let per_epoch = per_seq * train_cells as u64;
    Ok(CostReport {
        n_params,
        tokens_per_sequence: tokens,
        flops_per_sequence: per_seq,
        train_cells: train_cells as u64,
        flops_per_epoch: per_epoch,
        epochs: epochs as u64,
        flops_per_run: per_epoch * epochs as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pat_net::init_params;
    use crate::qta::qta_tokenize;
    use alloc::vec;

    fn tiny(n_attributes: usize) -> PatConfig {
        PatConfig {
            layers: 2,
            heads: 2,
            d_head: 4,
            d_mlp: 32,
            seed: 3,
            ..PatConfig::new(8, 3, n_attributes)
        }
    }

    fn example(text: &str, attr: usize, label: bool) -> Example {
        let tc = qta_tokenize(text, 8, 3);
        Example {
            tokens: tc.token_count(),
            embedding: tc.embedding,
            attr,
            label,
        }
    }

    fn memorizable() -> Vec<Example> {
        [
            ("10019", 0, false),
            ("1xx19", 0, true),
            ("60614", 0, false),
            ("6e-2", 1, true),
            ("0.42", 1, false),
            ("", 1, true),
            ("Chicago", 2, false),
            ("CHICAGO", 2, true),
            ("Salem", 2, false),
            ("Closed", 2, true),
        ]
        .iter()
        .map(|&(t, a, l)| example(t, a, l))
        .collect()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 200,
            batch_size: 4,
            patience: 200,
            class_weighting: ClassWeighting::Off,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn overfits_ten_samples() {
        let data = memorizable();
        let refs: Vec<&Example> = data.iter().collect();
        for seed in 0..4 {
            let model = init_params(&PatConfig { seed, ..tiny(3) }).unwrap();
            let cfg = TrainConfig {
                seed,
                epochs: 400,
                patience: 400,
                ..cfg()
            };
            let out = train(model, &cfg, &refs, &[]).unwrap();
            let m = evaluate(&out.model, &refs).unwrap();
            assert_eq!(m.accuracy(), 1.0, "seed {seed}: {:?}", out.history.last());
        }
    }

    #[test]
    fn loss_decreases_on_fixed_batch() {
        let data = memorizable();
        let refs: Vec<&Example> = data.iter().collect();
        let model = init_params(&tiny(3)).unwrap();
        let mut state = TrainState::new(model, &cfg(), &refs).unwrap();
        let losses: Vec<f64> = (0..10).map(|_| train_step(&mut state, &refs, 0.002).unwrap()).collect();
        assert!(losses[9] < losses[0], "{losses:?}");
    }

    #[test]
    fn deterministic_history() {
        let data = memorizable();
        let refs: Vec<&Example> = data.iter().collect();
        let cfg = TrainConfig { epochs: 5, ..cfg() };
        let a = train(init_params(&tiny(3)).unwrap(), &cfg, &refs, &refs).unwrap();
        let b = train(init_params(&tiny(3)).unwrap(), &cfg, &refs, &refs).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn patience_zero_runs_one_epoch() {
        let data = memorizable();
        let refs: Vec<&Example> = data.iter().collect();
        let cfg = TrainConfig { patience: 0, ..cfg() };
        let out = train(init_params(&tiny(3)).unwrap(), &cfg, &refs, &refs).unwrap();
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn resume_is_bit_identical() {
        let data = memorizable();
        let refs: Vec<&Example> = data.iter().collect();
        let cfg = TrainConfig { epochs: 6, ..cfg() };
        let full = train(init_params(&tiny(3)).unwrap(), &cfg, &refs, &refs).unwrap();

        let mut state = TrainState::new(init_params(&tiny(3)).unwrap(), &cfg, &refs).unwrap();
        for _ in 0..3 {
            run_epoch(&mut state, &cfg, &refs, &refs).unwrap();
        }
        let resumed = resume(state.clone(), &cfg, &refs, &refs).unwrap();
        assert_eq!(resumed.state, full.state);
    }

    #[test]
    fn absent_banks_untouched() {
        let data = memorizable();
        let only_attr0: Vec<&Example> = data.iter().filter(|e| e.attr == 0).collect();
        let model = init_params(&tiny(3)).unwrap();
        let before = model.bank.patterns.clone();
        let mut state = TrainState::new(model, &cfg(), &only_attr0).unwrap();
        for _ in 0..3 {
            train_step(&mut state, &only_attr0, 0.01).unwrap();
        }
        assert_ne!(state.model.bank.patterns[0], before[0]);
        assert_eq!(state.model.bank.patterns[1], before[1]);
        assert_eq!(state.model.bank.patterns[2], before[2]);

        let mut tape = Tape::new();
        let vars = ModelVars::bind(&mut tape, &state.model, true);
        let samples: Vec<Sample> = only_attr0.iter().map(|e| e.sample()).collect();
        let out = forward_batch(&mut tape, &vars, &state.model.config, &samples).unwrap();
        let loss = tape.cross_entropy(out.logits, &[0, 1, 0], None).unwrap();
        let grads = tape.backward(loss).unwrap();
        let all = vars.all();
        let off = state.model.bank_offset();
        assert!(grads.wrt(all[off]).is_some());
        assert!(grads.wrt(all[off + 1]).is_none());
        assert!(grads.wrt(all[off + 2]).is_none());
    }

    #[test]
    fn class_weights() {
        let mut data: Vec<Example> = (0..19).map(|_| example("ok", 0, false)).collect();
        data.push(example("bad", 0, true));
        let refs: Vec<&Example> = data.iter().collect();
        let model = init_params(&tiny(1)).unwrap();
        let auto = TrainState::new(model.clone(), &TrainConfig::default(), &refs).unwrap();
        let w = auto.class_weights.unwrap();
        assert!((w[0] - 20.0 / 38.0).abs() < 1e-6 && (w[1] - 10.0).abs() < 1e-6);
        let off = TrainConfig {
            class_weighting: ClassWeighting::Off,
            ..TrainConfig::default()
        };
        assert!(TrainState::new(model, &off, &refs).unwrap().class_weights.is_none());
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = init_params(&tiny(1)).unwrap();
        assert!(train(model.clone(), &cfg(), &[], &[]).is_err());
        let bad = TrainConfig { lr0: 0.0, ..cfg() };
        let e = example("x", 0, false);
        assert!(train(model.clone(), &bad, &[&e], &[]).is_err());
        let wrong = example("x", 4, false);
        assert!(matches!(
            train(model, &cfg(), &[&wrong], &[]),
            Err(Error::AttributeOutOfRange { id: 4, count: 1 })
        ));
    }

    #[test]
    fn nan_loss_aborts() {
        let mut model = init_params(&tiny(1)).unwrap();
        model.params.head.w.data_mut()[0] = f32::NAN;
        let e = example("x", 0, false);
        let err = train(model, &cfg(), &[&e], &[]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err}");
    }

    #[test]
    fn cost_formula() {
        let cfg = PatConfig { n_tokens: 2, ..tiny(1) };
        let r = cost_estimate(&cfg, 100, 3).unwrap();
        assert_eq!(r.tokens_per_sequence, 5);
        assert_eq!(r.flops_per_sequence, 6 * 5 * r.n_params);
        assert_eq!(r.flops_per_epoch, 100 * r.flops_per_sequence);
        assert_eq!(r.flops_per_run, 3 * r.flops_per_epoch);

        let t = cost_estimate(&tiny(2), 1, 1).unwrap();
        assert_eq!(t.n_params, 1778 + 48);
        assert_eq!(t.flops_per_sequence, 6 * 7 * (1778 + 48));
    }

    #[test]
    fn examples_from_table() {
        let table = Table::new(
            vec!["a".into(), "b".into()],
            vec![vec!["1".into(), "x".into()], vec!["2".into(), "y".into()]],
        )
        .unwrap();
        let mask = LabelMask::from_vec(2, 2, vec![false, true, false, false]).unwrap();
        let mut lex = Lexicon::new(8, 3);
        let ex = build_examples(&table, Some(&mask), &mut lex).unwrap();
        assert_eq!(ex.len(), 4);
        assert_eq!(ex.iter().map(|e| e.attr).collect::<Vec<_>>(), [0, 1, 0, 1]);
        assert_eq!(
            ex.iter().map(|e| e.label).collect::<Vec<_>>(),
            [false, true, false, false]
        );
        assert_eq!(lex.len(), 4);
        let bad = LabelMask::new(3, 2);
        assert!(build_examples(&table, Some(&bad), &mut lex).is_err());
    }
}
