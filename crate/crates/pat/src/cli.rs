//! `pat` subcommands. Every run writes a JSON manifest next to its output.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pat_core::corpus::{derive_labels, Partition};
use pat_core::evalkit::{default_schema, gen_synthetic, inject_errors, ErrorKind, InjectionSpec};
use pat_core::explain::extract_vis;
use pat_core::pat_net::infer_batch;
use pat_core::trainer::cost_estimate;

use crate::checkpoint::{load_checkpoint, load_train_state, save_checkpoint, save_train_state, Mode};
use crate::config::{hyper_params_from_kv, hyper_params_to_kv, KeyValues, Settings};
use crate::error::{PatError, Result};
use crate::lexicon_io::{load_lexicon, save_lexicon};
use crate::pipeline::{self, TrainRequest};
use crate::report::{
    metrics_text, parse_relation, render_history, write_heatmap, FileDigest, HeatmapFormat, MetricsJson, RunManifest,
};
use crate::table_io::{
    is_predictions_file, predictions_shape, predictions_to_mask, read_mask, read_mask_for, read_predictions,
    read_split, read_table, write_mask, write_predictions, write_split, write_table, write_tags, write_text,
};

/// Stdout writes that ignore a closed pipe.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "pat", version, about = "Cell-level error detection for CSV tables")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tokenizer worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// key = value file overriding profiler, model and trainer defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Default,
    Compact,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Default => Mode::Default,
            ModeArg::Compact => Mode::Compact,
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct ProfilerFlags {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub beta_c: Option<f64>,
    #[arg(long)]
    pub mu_l: Option<f64>,
    #[arg(long)]
    pub mu_r: Option<f64>,
    #[arg(long)]
    pub mu_cl: Option<f64>,
    #[arg(long)]
    pub mu_cr: Option<f64>,
    #[arg(long)]
    pub mu_long: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Freeze the pattern bank at zero.
    #[arg(long)]
    pub no_patterns: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Profile a table and write D, N, D_c and N_c.
    Profile {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        knobs: ProfilerFlags,
    },
    /// Tokenize every cell and write a lexicon cache.
    Tokenize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        hp: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "default")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        knobs: ProfilerFlags,
    },
    /// Train a model; writes a checkpoint directory.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        /// Error mask with the table's header and 0/1 cells.
        #[arg(long, conflicts_with = "clean", required_unless_present = "clean")]
        labels: Option<PathBuf>,
        /// Clean version of the table; labels are the differing cells.
        #[arg(long)]
        clean: Option<PathBuf>,
        #[arg(long)]
        hp: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "default")]
        mode: ModeArg,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        /// History CSV; defaults to `<out>/history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Continue from the training state saved in `<out>`.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs; `--resume` picks up from there.
        #[arg(long)]
        pause_after: Option<usize>,
        #[command(flatten)]
        knobs: ProfilerFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Predict every cell of a table.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predictions with the truth.
    Eval {
        /// Predictions CSV or 0/1 mask.
        #[arg(long)]
        pred: PathBuf,
        /// Predictions CSV or 0/1 mask.
        #[arg(long)]
        truth: PathBuf,
        /// Restrict to one partition of a split export.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "test", requires = "split")]
        part: String,
        /// Also write the metrics as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Render attention heatmaps for cells.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// `row:col`, repeatable.
        #[arg(long = "cell", required = true, value_parser = parse_cell)]
        cells: Vec<(usize, usize)>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated subset of svg, pgm, json.
        #[arg(long, default_value = "svg,pgm,json")]
        format: String,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value = "row")]
        relation: String,
    },
    /// Write a synthetic clean/dirty/mask triple.
    Synth {
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        #[arg(long, default_value_t = 0.1)]
        rate: f64,
        /// Comma-separated error kinds.
        #[arg(long, default_value = "mv,tp,ot,fv")]
        kinds: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Parameter and FLOP counts of a model.
    Cost {
        /// Read the model configuration from a checkpoint.
        #[arg(long, conflicts_with_all = ["hp", "attributes"])]
        checkpoint: Option<PathBuf>,
        #[arg(long, required_unless_present = "checkpoint")]
        hp: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "default")]
        mode: ModeArg,
        #[arg(long, required_unless_present = "checkpoint")]
        attributes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        train_cells: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn parse_cell(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once(':').ok_or("expected row:col")?;
    Ok((
        r.trim().parse().map_err(|_| "bad row")?,
        c.trim().parse().map_err(|_| "bad col")?,
    ))
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    seed: u64,
    threads: usize,
    settings: Settings,
    manifest: RunManifest,
    manifest_path: Option<PathBuf>,
}

impl Ctx {
    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    fn finish(mut self, default_path: PathBuf) -> Result<()> {
        let path = self.manifest_path.take().unwrap_or(default_path);
        self.manifest.write(&path)
    }
}

fn apply_profiler_flags(s: &mut Settings, k: &ProfilerFlags) {
    let p = &mut s.profiler;
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut p.beta, k.beta);
    set(&mut p.beta_c, k.beta_c);
    set(&mut p.mu_l, k.mu_l);
    set(&mut p.mu_r, k.mu_r);
    set(&mut p.mu_cl, k.mu_cl);
    set(&mut p.mu_cr, k.mu_cr);
    set(&mut p.mu_long, k.mu_long);
}

fn apply_train_flags(s: &mut Settings, t: &TrainFlags) {
    if let Some(v) = t.epochs {
        s.train.epochs = v;
    }
    if let Some(v) = t.patience {
        s.train.patience = v;
    }
    if let Some(v) = t.batch_size {
        s.train.batch_size = v;
    }
    if let Some(v) = t.lr {
        s.train.lr0 = v;
    }
    if t.no_patterns {
        s.model.patterns = false;
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Hyperparameters from `--hp`, or from profiling `table` when absent.
fn resolve_hp(
    ctx: &mut Ctx,
    hp: Option<&Path>,
    table: &pat_core::corpus::Table,
) -> Result<pat_core::profiler::HyperParams> {
    match hp {
        Some(path) => {
            ctx.input(path)?;
            let mut kv = KeyValues::read(path)?;
            let hp = hyper_params_from_kv(&mut kv)?;
            // Profiler knobs recorded with the file only describe how it was made.
            ctx.settings.clone().absorb(&mut kv)?;
            kv.finish()?;
            Ok(hp)
        }
        None => Ok(pipeline::profile(table, &ctx.settings.profiler)?.1),
    }
}

fn execute(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(PatError::Usage("--threads must be at least 1".into()));
    }
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        let mut kv = KeyValues::read(path)?;
        settings.absorb(&mut kv)?;
        kv.finish()?;
    }
    match &cli.command {
        Command::Profile { knobs, .. } | Command::Tokenize { knobs, .. } => apply_profiler_flags(&mut settings, knobs),
        Command::Train { knobs, train, .. } => {
            apply_profiler_flags(&mut settings, knobs);
            apply_train_flags(&mut settings, train);
        }
        Command::Explain { eta: Some(eta), .. } => settings.eta = *eta,
        _ => {}
    }
    settings.validate()?;
    let name = match &cli.command {
        Command::Profile { .. } => "profile",
        Command::Tokenize { .. } => "tokenize",
        Command::Train { .. } => "train",
        Command::Detect { .. } => "detect",
        Command::Eval { .. } => "eval",
        Command::Explain { .. } => "explain",
        Command::Synth { .. } => "synth",
        Command::Cost { .. } => "cost",
    };
    let mut ctx = Ctx {
        seed: cli.seed,
        threads: cli.threads,
        settings,
        manifest: RunManifest::new(name, cli.seed, cli.threads, &settings.to_kv()),
        manifest_path: cli.manifest.clone(),
    };
    if let Some(path) = &cli.config {
        ctx.input(path)?;
    }
    match cli.command {
        Command::Profile { input, out, .. } => cmd_profile(ctx, &input, &out),
        Command::Tokenize {
            input, hp, mode, out, ..
        } => cmd_tokenize(ctx, &input, hp.as_deref(), mode.into(), &out),
        Command::Train {
            input,
            labels,
            clean,
            hp,
            mode,
            lexicon,
            out,
            history,
            resume,
            pause_after,
            ..
        } => cmd_train(
            ctx,
            TrainArgs {
                input,
                labels,
                clean,
                hp,
                mode: mode.into(),
                lexicon,
                out,
                history,
                resume,
                pause_after,
            },
        ),
        Command::Detect {
            checkpoint,
            input,
            lexicon,
            out,
        } => cmd_detect(ctx, &checkpoint, &input, lexicon.as_deref(), &out),
        Command::Eval {
            pred,
            truth,
            split,
            part,
            json,
        } => cmd_eval(ctx, &pred, &truth, split.as_deref(), &part, json.as_deref()),
        Command::Explain {
            checkpoint,
            input,
            cells,
            out_dir,
            format,
            relation,
            ..
        } => cmd_explain(ctx, &checkpoint, &input, &cells, &out_dir, &format, &relation),
        Command::Synth {
            rows,
            rate,
            kinds,
            out_dir,
        } => cmd_synth(ctx, rows, rate, &kinds, &out_dir),
        Command::Cost {
            checkpoint,
            hp,
            mode,
            attributes,
            train_cells,
            epochs,
            json,
        } => cmd_cost(
            ctx,
            checkpoint.as_deref(),
            hp.as_deref(),
            mode.into(),
            attributes,
            train_cells,
            epochs,
            json.as_deref(),
        ),
    }
}

fn cmd_profile(mut ctx: Ctx, input: &Path, out: &Path) -> Result<()> {
    ctx.input(input)?;
    let table = read_table(input)?;
    let (profile, hp) = pipeline::profile(&table, &ctx.settings.profiler)?;
    let kv = hyper_params_to_kv(&hp, &profile, &ctx.settings.profiler);
    write_text(out, &kv.render())?;
    out!("{}", kv.render());
    ctx.output(out)?;
    ctx.finish(sibling(out, ".manifest.json"))
}

fn cmd_tokenize(mut ctx: Ctx, input: &Path, hp: Option<&Path>, mode: Mode, out: &Path) -> Result<()> {
    ctx.input(input)?;
    let table = read_table(input)?;
    let hp = resolve_hp(&mut ctx, hp, &table)?;
    let (d, n) = pipeline::mode_dims(&hp, mode);
    let lex = pipeline::lexicon_for(&table, d, n, ctx.threads, None)?;
    save_lexicon(out, &lex)?;
    outln!("{} cells, {} tokens, D={d}, N={n}", lex.len(), lex.vocab_len());
    ctx.output(out)?;
    ctx.finish(sibling(out, ".manifest.json"))
}

struct TrainArgs {
    input: PathBuf,
    labels: Option<PathBuf>,
    clean: Option<PathBuf>,
    hp: Option<PathBuf>,
    mode: Mode,
    lexicon: Option<PathBuf>,
    out: PathBuf,
    history: Option<PathBuf>,
    resume: bool,
    pause_after: Option<usize>,
}

fn cmd_train(mut ctx: Ctx, a: TrainArgs) -> Result<()> {
    ctx.input(&a.input)?;
    let table = read_table(&a.input)?;
    let mask = match (&a.labels, &a.clean) {
        (Some(path), _) => {
            ctx.input(path)?;
            read_mask_for(path, &table)?
        }
        (None, Some(path)) => {
            ctx.input(path)?;
            let clean = read_table(path)?;
            derive_labels(&table, &clean).map_err(|e| PatError::data(path, e.to_string()))?
        }
        (None, None) => return Err(PatError::Usage("train needs --labels or --clean".into())),
    };
    let hp = resolve_hp(&mut ctx, a.hp.as_deref(), &table)?;
    let lexicon = match &a.lexicon {
        Some(path) => {
            ctx.input(path)?;
            Some(load_lexicon(path)?)
        }
        None => None,
    };
    let resume = if a.resume {
        let ckpt = load_checkpoint(&a.out)?;
        Some(load_train_state(&a.out, ckpt.model)?)
    } else {
        None
    };
    let run = pipeline::train_model(TrainRequest {
        table: &table,
        mask: &mask,
        hp,
        mode: a.mode,
        settings: ctx.settings,
        seed: ctx.seed,
        threads: ctx.threads,
        lexicon,
        resume,
        pause_after: a.pause_after,
    })?;
    save_checkpoint(&a.out, &run.checkpoint)?;
    save_train_state(&a.out, &run.outcome.state)?;
    let history = a.history.clone().unwrap_or_else(|| a.out.join("history.csv"));
    write_text(&history, &render_history(&run.outcome.history))?;
    let split_path = a.out.join("split.csv");
    write_split(&split_path, &run.split, table.n_cols())?;
    outln!(
        "mode {} D={} N={} epochs {} best epoch {} val f1 {:.4}",
        a.mode.as_str(),
        run.checkpoint.d(),
        run.checkpoint.n(),
        run.outcome.history.len(),
        run.outcome.best_epoch,
        run.outcome.best_f1
    );
    if let Some(m) = &run.test {
        out!("test split:\n{}", metrics_text(m));
    }
    ctx.output(&a.out)?;
    ctx.output(&history)?;
    ctx.finish(a.out.join("run_manifest.json"))
}

fn cmd_detect(mut ctx: Ctx, checkpoint: &Path, input: &Path, lexicon: Option<&Path>, out: &Path) -> Result<()> {
    ctx.input(checkpoint)?;
    ctx.input(input)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let table = read_table(input)?;
    let cached = match lexicon {
        Some(path) => {
            ctx.input(path)?;
            let lex = load_lexicon(path)?;
            pipeline::check_lexicon(&lex, ckpt.d(), ckpt.n())?;
            Some(lex)
        }
        None => None,
    };
    let mut lex = pipeline::lexicon_for(&table, ckpt.d(), ckpt.n(), ctx.threads, cached)?;
    let preds = pipeline::detect(&ckpt, &table, &mut lex)?;
    write_predictions(out, &preds)?;
    let flagged = preds.iter().filter(|p| p.error).count();
    outln!("{} cells, {flagged} flagged", preds.len());
    ctx.output(out)?;
    ctx.finish(sibling(out, ".manifest.json"))
}

/// A predictions file or a 0/1 mask as a dense mask.
fn load_labels(path: &Path, shape: Option<(usize, usize)>) -> Result<pat_core::corpus::LabelMask> {
    if is_predictions_file(path)? {
        let preds = read_predictions(path)?;
        let (r, c) = shape.unwrap_or_else(|| predictions_shape(&preds));
        predictions_to_mask(path, &preds, r, c)
    } else {
        let (_, mask) = read_mask(path)?;
        if let Some(s) = shape {
            if (mask.rows(), mask.cols()) != s {
                return Err(PatError::data(
                    path,
                    format!("mask is {}x{}, expected {}x{}", mask.rows(), mask.cols(), s.0, s.1),
                ));
            }
        }
        Ok(mask)
    }
}

fn cmd_eval(
    mut ctx: Ctx,
    pred: &Path,
    truth: &Path,
    split: Option<&Path>,
    part: &str,
    json: Option<&Path>,
) -> Result<()> {
    ctx.input(pred)?;
    ctx.input(truth)?;
    let truth_mask = load_labels(truth, None)?;
    let shape = (truth_mask.rows(), truth_mask.cols());
    let pred_mask = load_labels(pred, Some(shape))?;
    let metrics = match split {
        None => pipeline::score(&pred_mask, &truth_mask, None)?,
        Some(path) => {
            ctx.input(path)?;
            let part = Partition::parse(part).ok_or_else(|| PatError::Usage(format!("unknown partition {part:?}")))?;
            let tags = read_split(path, shape.0, shape.1)?;
            pipeline::score(&pred_mask, &truth_mask, Some((&tags, part)))?
        }
    };
    out!("{}", metrics_text(&metrics));
    let json_text = serde_json::to_string_pretty(&MetricsJson::from(&metrics)).expect("plain data serializes");
    outln!("{json_text}");
    let manifest_default = match json {
        Some(path) => {
            write_text(path, &json_text)?;
            ctx.output(path)?;
            sibling(path, ".manifest.json")
        }
        None => sibling(pred, ".eval.manifest.json"),
    };
    ctx.finish(manifest_default)
}

fn cmd_explain(
    mut ctx: Ctx,
    checkpoint: &Path,
    input: &Path,
    cells: &[(usize, usize)],
    out_dir: &Path,
    format: &str,
    relation: &str,
) -> Result<()> {
    ctx.input(checkpoint)?;
    ctx.input(input)?;
    let formats = format
        .split(',')
        .map(|f| HeatmapFormat::parse(f.trim()).ok_or_else(|| PatError::Usage(format!("unknown heatmap format {f:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let relation = parse_relation(relation).ok_or_else(|| PatError::Usage(format!("unknown relation {relation:?}")))?;
    let ckpt = load_checkpoint(checkpoint)?;
    let table = read_table(input)?;
    if table.attributes() != ckpt.attributes.as_slice() {
        return Err(PatError::Usage("table attributes differ from the checkpoint's".into()));
    }
    let mut lex = pat_core::qta::Lexicon::new(ckpt.d(), ckpt.n());
    std::fs::create_dir_all(out_dir).map_err(|e| PatError::io(out_dir, e))?;
    for &(row, col) in cells {
        if row >= table.n_rows() || col >= table.n_cols() {
            return Err(PatError::Usage(format!(
                "cell {row}:{col} outside the {}x{} table",
                table.n_rows(),
                table.n_cols()
            )));
        }
        let tc = lex.get_or_insert(table.cell(row, col)).clone();
        let sample = pat_core::pat_net::Sample {
            embedding: &tc.embedding,
            attr: col,
            tokens: tc.token_count(),
        };
        let (logits, traces) = infer_batch(&ckpt.model, &[sample], true)?;
        let trace = traces
            .into_iter()
            .next()
            .ok_or_else(|| PatError::Runtime("no attention trace".into()))?;
        let vis = extract_vis(&trace, &tc, ctx.settings.eta, relation)?;
        let p = pat_core::pat_net::predict(logits[0]);
        outln!(
            "{row}:{col} {:?} -> {} ({:.4})",
            table.cell(row, col),
            if p.error { "error" } else { "clean" },
            p.confidence
        );
        for &f in &formats {
            let path = out_dir.join(format!("cell_{row}_{col}.{}", f.extension()));
            write_heatmap(&path, &vis, f)?;
            ctx.output(&path)?;
        }
    }
    ctx.finish(out_dir.join("run_manifest.json"))
}

fn cmd_synth(mut ctx: Ctx, rows: usize, rate: f64, kinds: &str, out_dir: &Path) -> Result<()> {
    let kinds = kinds
        .split(',')
        .map(|k| ErrorKind::parse(k.trim()).ok_or_else(|| PatError::Usage(format!("unknown error kind {k:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let clean = gen_synthetic(
        rows,
        &default_schema(),
        pipeline::sub_seed(ctx.seed, pipeline::SYNTH_STREAM),
    )?;
    let spec = InjectionSpec::uniform(
        &clean,
        &kinds,
        rate,
        pipeline::sub_seed(ctx.seed, pipeline::INJECT_STREAM),
    )?;
    let injected = inject_errors(&clean, &spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| PatError::io(out_dir, e))?;
    let paths = ["clean.csv", "dirty.csv", "mask.csv", "tags.csv"].map(|f| out_dir.join(f));
    write_table(&paths[0], &clean)?;
    write_table(&paths[1], &injected.dirty)?;
    write_mask(&paths[2], clean.attributes(), &injected.mask)?;
    write_tags(&paths[3], &injected.tags, clean.n_cols())?;
    outln!(
        "{} rows, {} of {} cells corrupted",
        rows,
        injected.mask.count_errors(),
        clean.n_cells()
    );
    for p in &paths {
        ctx.output(p)?;
    }
    ctx.finish(out_dir.join("run_manifest.json"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_cost(
    mut ctx: Ctx,
    checkpoint: Option<&Path>,
    hp: Option<&Path>,
    mode: Mode,
    attributes: Option<usize>,
    train_cells: usize,
    epochs: Option<usize>,
    json: Option<&Path>,
) -> Result<()> {
    let cfg = match (checkpoint, hp, attributes) {
        (Some(path), _, _) => {
            ctx.input(path)?;
            load_checkpoint(path)?.model.config
        }
        (None, Some(path), Some(attrs)) => {
            ctx.input(path)?;
            let mut kv = KeyValues::read(path)?;
            let hp = hyper_params_from_kv(&mut kv)?;
            let (d, n) = pipeline::mode_dims(&hp, mode);
            ctx.settings.model.pat_config(d, n, attrs, 0)
        }
        _ => {
            return Err(PatError::Usage(
                "cost needs --checkpoint, or --hp with --attributes".into(),
            ))
        }
    };
    let report = cost_estimate(&cfg, train_cells, epochs.unwrap_or(ctx.settings.train.epochs))?;
    let j = serde_json::json!({
        "n_params": report.n_params,
        "tokens_per_sequence": report.tokens_per_sequence,
        "flops_per_sequence": report.flops_per_sequence,
        "train_cells": report.train_cells,
        "flops_per_epoch": report.flops_per_epoch,
        "epochs": report.epochs,
        "flops_per_run": report.flops_per_run,
    });
    outln!(
        "params {}\ntokens/sequence {}\nflops/sequence {}\nflops/epoch {}\nflops/run {}",
        report.n_params,
        report.tokens_per_sequence,
        report.flops_per_sequence,
        report.flops_per_epoch,
        report.flops_per_run
    );
    let text = serde_json::to_string_pretty(&j).expect("plain data serializes");
    outln!("{text}");
    let default_manifest = match json {
        Some(path) => {
            write_text(path, &text)?;
            ctx.output(path)?;
            sibling(path, ".manifest.json")
        }
        None => PathBuf::from("cost.manifest.json"),
    };
    ctx.finish(default_manifest)
}
