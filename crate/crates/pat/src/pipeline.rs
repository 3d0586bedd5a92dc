//! In-memory stages shared by the command line and the test suites.

use pat_core::corpus::{split_cells, LabelMask, Partition, SplitAssignment, Table};
use pat_core::evalkit::{compute_metrics, Metrics};
use pat_core::pat_net::init_params;
use pat_core::profiler::{profile_corpus, token_dim_num_setup, CorpusProfile, HyperParams, ProfilerConfig};
use pat_core::qta::Lexicon;
use pat_core::trainer::{build_examples, predict_examples, resume, run_epoch, Example, TrainOutcome, TrainState};

use crate::checkpoint::{Checkpoint, Mode};
use crate::config::Settings;
use crate::error::{PatError, Result};
use crate::lexicon_io::build_lexicon;
use crate::table_io::PredictionRow;

/// Independent streams derived from the single run seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub const SPLIT_STREAM: u64 = 1;
pub const INIT_STREAM: u64 = 2;
pub const TRAIN_STREAM: u64 = 3;
pub const SYNTH_STREAM: u64 = 4;
pub const INJECT_STREAM: u64 = 5;

pub fn profile(table: &Table, cfg: &ProfilerConfig) -> Result<(CorpusProfile, HyperParams)> {
    let p = profile_corpus(table)?;
    let hp = token_dim_num_setup(&p, cfg)?;
    Ok((p, hp))
}

pub fn mode_dims(hp: &HyperParams, mode: Mode) -> (usize, usize) {
    match mode {
        Mode::Default => (hp.d, hp.n),
        Mode::Compact => (hp.d_c, hp.n_c),
    }
}

/// Fails unless `lex` was built at `(d, n)`.
pub fn check_lexicon(lex: &Lexicon, d: usize, n: usize) -> Result<()> {
    if (lex.d(), lex.n()) != (d, n) {
        return Err(PatError::Usage(format!(
            "lexicon was built with D={}, N={} but the model needs D={d}, N={n}",
            lex.d(),
            lex.n()
        )));
    }
    Ok(())
}

/// Lexicon covering every cell of `table`, extending `cached` if given.
pub fn lexicon_for(table: &Table, d: usize, n: usize, threads: usize, cached: Option<Lexicon>) -> Result<Lexicon> {
    match cached {
        None => Ok(build_lexicon(table, d, n, threads)),
        Some(mut lex) => {
            check_lexicon(&lex, d, n)?;
            for (_, _, cell) in table.cells() {
                lex.get_or_insert(cell);
            }
            Ok(lex)
        }
    }
}

pub struct TrainRequest<'a> {
    pub table: &'a Table,
    pub mask: &'a LabelMask,
    pub hp: HyperParams,
    pub mode: Mode,
    pub settings: Settings,
    pub seed: u64,
    pub threads: usize,
    pub lexicon: Option<Lexicon>,
    /// Continue from this state instead of a fresh initialization.
    pub resume: Option<TrainState>,
    /// Stop after this many epochs of this call; the state stays resumable.
    pub pause_after: Option<usize>,
}

pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub outcome: TrainOutcome,
    pub split: SplitAssignment,
    pub lexicon: Lexicon,
    /// Best model on the test partition; `None` when it is empty.
    pub test: Option<Metrics>,
}

fn partition<'e>(examples: &'e [Example], split: &SplitAssignment, part: Partition) -> Vec<&'e Example> {
    split
        .tags()
        .iter()
        .zip(examples)
        .filter(|(t, _)| **t == part)
        .map(|(_, e)| e)
        .collect()
}

pub fn train_model(req: TrainRequest<'_>) -> Result<TrainRun> {
    let TrainRequest {
        table,
        mask,
        hp,
        mode,
        settings,
        seed,
        threads,
        lexicon,
        resume: resumed,
        pause_after,
    } = req;
    settings.validate()?;
    let (d, n) = mode_dims(&hp, mode);
    let mut lexicon = lexicon_for(table, d, n, threads, lexicon)?;
    let examples = build_examples(table, Some(mask), &mut lexicon)?;
    let split = split_cells(table, mask, settings.split, sub_seed(seed, SPLIT_STREAM))?;
    let train = partition(&examples, &split, Partition::Train);
    let val = partition(&examples, &split, Partition::Val);
    let test = partition(&examples, &split, Partition::Test);
    let mut cfg = settings.train;
    cfg.seed = sub_seed(seed, TRAIN_STREAM);
    let pat_cfg = settings
        .model
        .pat_config(d, n, table.n_cols(), sub_seed(seed, INIT_STREAM));
    let state = match resumed {
        Some(s) => {
            if s.model.config != pat_cfg {
                return Err(PatError::Usage(
                    "saved training state was made with a different model configuration".into(),
                ));
            }
            s
        }
        None => TrainState::new(init_params(&pat_cfg)?, &cfg, &train)?,
    };
    let outcome = match pause_after {
        None => resume(state, &cfg, &train, &val)?,
        Some(k) => {
            let mut state = state;
            for _ in 0..k {
                if state.finished(&cfg) {
                    break;
                }
                run_epoch(&mut state, &cfg, &train, &val)?;
            }
            TrainOutcome {
                model: state.best.clone(),
                history: state.history.clone(),
                best_epoch: state.best_epoch,
                best_f1: state.best_f1,
                state,
            }
        }
    };
    let test = if test.is_empty() {
        None
    } else {
        let preds = predict_examples(&outcome.model, &test)?;
        Some(Metrics::from_pairs(
            preds.iter().zip(&test).map(|(p, e)| (p.0, e.label)),
        ))
    };
    Ok(TrainRun {
        checkpoint: Checkpoint {
            model: outcome.model.clone(),
            attributes: table.attributes().to_vec(),
            mode,
        },
        outcome,
        split,
        lexicon,
        test,
    })
}

/// One prediction per cell, row-major.
pub fn detect(ckpt: &Checkpoint, table: &Table, lexicon: &mut Lexicon) -> Result<Vec<PredictionRow>> {
    if table.attributes() != ckpt.attributes.as_slice() {
        return Err(PatError::Usage(format!(
            "table attributes {:?} differ from the checkpoint's {:?}",
            table.attributes(),
            ckpt.attributes
        )));
    }
    check_lexicon(lexicon, ckpt.d(), ckpt.n())?;
    let examples = build_examples(table, None, lexicon)?;
    let refs: Vec<&Example> = examples.iter().collect();
    let preds = predict_examples(&ckpt.model, &refs)?;
    let cols = table.n_cols();
    Ok(preds
        .into_iter()
        .enumerate()
        .map(|(k, (error, confidence))| PredictionRow {
            row: k / cols,
            col: k % cols,
            error,
            confidence,
        })
        .collect())
}

pub fn predictions_mask(preds: &[PredictionRow], rows: usize, cols: usize) -> LabelMask {
    let mut m = LabelMask::new(rows, cols);
    for p in preds {
        m.set(p.row, p.col, p.error);
    }
    m
}

/// Metrics restricted to cells tagged `part`, or over all cells.
pub fn score(pred: &LabelMask, truth: &LabelMask, split: Option<(&[Partition], Partition)>) -> Result<Metrics> {
    match split {
        None => Ok(compute_metrics(pred, truth)?),
        Some((tags, part)) => {
            if tags.len() != truth.as_slice().len() || pred.as_slice().len() != truth.as_slice().len() {
                return Err(PatError::Usage("split, predictions and truth differ in size".into()));
            }
            Ok(Metrics::from_pairs(
                tags.iter()
                    .zip(pred.as_slice().iter().zip(truth.as_slice()))
                    .filter(|(t, _)| **t == part)
                    .map(|(_, (&p, &t))| (p, t)),
            ))
        }
    }
}
