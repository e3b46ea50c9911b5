//! `sst` subcommands: synth, train, grid and eval.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sst_core::data::{label_counts, synth_dataset, time_split, Batch, SynthSpec, DEFAULT_SPLIT};
use sst_core::metrics::{multi_seed_report, render_table, RocReport, RunAucs};
use sst_core::train::{fit, rank_best, run_grid_point, GridPoint, TrainOptions};
use sst_core::{derive_seed, seeded_rng, SstModel};

use crate::checkpoint::{check_compatible, Checkpoint};
use crate::config::{GridConfig, RunConfig};
use crate::error::{Error, Result};
use crate::manifest::{Dataset, Manifest, Split, SplitFiles, Splits, MANIFEST_VERSION};
use crate::npy::{write_npy, NpyArray};
use crate::report;

/// Grids larger than this need `--confirm`.
pub const GRID_CONFIRM_LIMIT: usize = 100;

const SUBSET_STREAM: u64 = 0x6a1d;

#[derive(Debug, Parser)]
#[command(name = "sst", version, about = "Soft sensing transformer: synthesize data, train, grid-search and evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (NPY files plus manifest).
    Synth(SynthArgs),
    /// Train one model and write its checkpoint and epoch log.
    Train(TrainArgs),
    /// Grid-search hyperparameters on seeded subsets.
    Grid(GridArgs),
    /// Evaluate one or more checkpoints on a split.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory; every file the command writes goes here.
    #[arg(long, env = "SST_OUT_DIR", default_value = "sst-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    pub tasks: usize,
    /// Total samples, split 70:14:8 into train, validation and test.
    #[arg(long, required_unless_present = "train")]
    pub samples: Option<usize>,
    /// Explicit split sizes instead of --samples.
    #[arg(long, requires_all = ["val", "test"], conflicts_with = "samples")]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Feature width including the trailing padding indicator.
    #[arg(long, default_value_t = 20)]
    pub features: usize,
    #[arg(long, default_value_t = 2)]
    pub timesteps: usize,
    /// Fraction of positive labels per task.
    #[arg(long, default_value_t = 0.1)]
    pub imbalance: f64,
    /// Signal-to-noise ratio of the labelling rule; `inf` for no noise.
    #[arg(long, default_value_t = 8.0)]
    pub separability: f64,
    /// Probability that a task is labelled for a sample.
    #[arg(long, default_value_t = 0.9)]
    pub label_rate: f64,
    /// Probability that a sample is shorter than the full length.
    #[arg(long, default_value_t = 0.2)]
    pub short_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

/// Command-line overrides of the run configuration.
#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub dmodel: Option<usize>,
    #[arg(long)]
    pub dff: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr_factor: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long)]
    pub uncertainty: Option<bool>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs_max: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($src:ident => $dst:ident),*) => {$(if let Some(v) = self.$src { c.$dst = v; })*};
        }
        set!(n_layers => n_layers, dmodel => dmodel, dff => dff, heads => n_heads, dropout => dropout_rate,
             lr_factor => lr_factor, batch_size => batch_size, warmup => warmup, uncertainty => uncertainty_weighting,
             l2 => l2_factor, seed => seed, epochs_max => max_epochs, patience => patience);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// JSON grid: searchable keys take a value or a list of values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Required for grids above 100 points.
    #[arg(long)]
    pub confirm: bool,
    /// Skip points already recorded in the output grid.csv.
    #[arg(long)]
    pub resume: bool,
    /// Worker threads, one grid point each.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate; repeat for runs with different seeds.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Tasks (1-based) to plot; defaults to the task with the highest AUC.
    #[arg(long, value_delimiter = ',')]
    pub roc_tasks: Vec<usize>,
    /// Thresholds for the TPR/FPR table.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub thresholds: Vec<f64>,
    #[command(flatten)]
    pub out: OutArg,
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Grid(a) => cmd_grid(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
    text.push('\n');
    report::write_text(path, &text)
}

fn batch_arrays(b: &Batch) -> (NpyArray, NpyArray) {
    (
        NpyArray::f64(b.x.shape().to_vec(), b.x.data().to_vec()),
        NpyArray::f64(b.labels.shape().to_vec(), b.labels.data().to_vec()),
    )
}

/// Write three splits as NPY files plus `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, splits: [&Batch; 3], seed: Option<u64>) -> Result<Manifest> {
    create_dir(dir)?;
    let names = ["train", "val", "test"];
    let mut files = Vec::new();
    for (name, b) in names.iter().zip(splits) {
        let (x, y) = batch_arrays(b);
        let f = SplitFiles { x: format!("x_{name}.npy").into(), y: format!("y_{name}.npy").into() };
        write_npy(dir.join(&f.x), &x)?;
        write_npy(dir.join(&f.y), &y)?;
        files.push(f);
    }
    let mut files = files.into_iter();
    let first = splits[0];
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        n_tasks: first.n_tasks(),
        n_features: first.n_features(),
        timesteps: first.timesteps(),
        seed,
        padding_indicator: true,
        splits: Splits {
            train: files.next().expect("train"),
            val: files.next().expect("val"),
            test: files.next().expect("test"),
        },
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Per-task class counts per split, laid out as task, then (pos, neg) per split.
pub fn class_count_table(splits: &[(&str, &Batch)]) -> Result<String> {
    let counts = splits
        .iter()
        .map(|(_, b)| label_counts(&b.labels, &b.label_mask))
        .collect::<sst_core::Result<Vec<_>>>()?;
    let m = counts.first().map_or(0, Vec::len);
    let mut header = vec!["task".to_string()];
    for (name, _) in splits {
        header.push(format!("{name} pos"));
        header.push(format!("{name} neg"));
    }
    let mut rows = vec![header];
    for j in 0..m {
        let mut row = vec![(j + 1).to_string()];
        for c in &counts {
            row.push(c[j][1].to_string());
            row.push(c[j][0].to_string());
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len()).map(|k| rows.iter().map(|r| r[k].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(&cells.join("  "));
        out.push('\n');
    }
    Ok(out)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let (n_train, n_val, n_test) = match (a.samples, a.train, a.val, a.test) {
        (Some(n), None, _, _) => {
            let [tr, va, te] = time_split(n, DEFAULT_SPLIT)?;
            (tr.len(), va.len(), te.len())
        }
        (None, Some(tr), Some(va), Some(te)) => (tr, va, te),
        _ => return Err(Error::Config("give either --samples or all of --train, --val and --test".into())),
    };
    let spec = SynthSpec {
        n_tasks: a.tasks,
        n_train,
        n_val,
        n_test,
        timesteps: a.timesteps,
        features: a.features,
        separability: a.separability,
        imbalance: a.imbalance,
        label_rate: a.label_rate,
        short_rate: a.short_rate,
        seed: a.seed,
    };
    let data = synth_dataset(&spec)?;
    write_dataset(&a.out.out, [&data.train, &data.val, &data.test], Some(a.seed))?;
    let table = class_count_table(&[("train", &data.train), ("val", &data.val), ("test", &data.test)])?;
    print!("{table}");
    println!("wrote {}", a.out.out.join("manifest.json").display());
    Ok(())
}

fn load_run_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut config);
    Ok(config)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let dataset = Dataset::open(&a.manifest)?;
    let run = load_run_config(a.config.as_deref(), &a.overrides)?;
    let config = run.model_config(&dataset.manifest)?;
    let (train, _) = dataset.load(Split::Train)?;
    let (val, _) = dataset.load(Split::Val)?;
    let out = &a.out.out;
    create_dir(out)?;
    let resolved = RunConfig {
        n_features: Some(config.n_features),
        n_tasks: Some(config.n_tasks),
        max_timesteps: Some(config.max_timesteps),
        ..run.clone()
    };
    write_json(&out.join("config.json"), &resolved)?;

    let mut model = SstModel::new(&config)?;
    let opts = TrainOptions { max_epochs: run.max_epochs, patience: run.patience };
    let log_path = out.join("epochs.csv");
    let report = match fit(&mut model, &train, &val, &opts) {
        Ok(r) => r,
        Err(sst_core::Error::Diverged { epoch, step, reason, completed }) => {
            report::write_epoch_log(&log_path, &completed, config.n_tasks)?;
            let last = completed.last().map_or_else(|| "none".to_string(), |r| r.epoch.to_string());
            return Err(sst_core::Error::Diverged {
                epoch,
                step,
                reason: format!("{reason} (last finite epoch: {last}, log in {})", log_path.display()),
                completed,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    report::write_epoch_log(&log_path, &report.epochs, config.n_tasks)?;
    let ckpt = Checkpoint { model, class_weights: report.class_weights.clone(), log_var: report.log_var.clone() };
    ckpt.save(out.join("checkpoint.sst"))?;
    println!(
        "trained {} epochs (best {}), {}",
        report.epochs.len(),
        report.best_epoch.map_or_else(|| "none".to_string(), |e| e.to_string()),
        sst_core::train::describe(&report.val)
    );
    Ok(())
}

fn cmd_grid(a: &GridArgs) -> Result<()> {
    let dataset = Dataset::open(&a.manifest)?;
    let grid = match &a.config {
        Some(p) => GridConfig::load(p)?,
        None => GridConfig::default(),
    };
    let spec = grid.spec(&dataset.manifest);
    let size = spec.size();
    println!("grid has {size} points");
    if size == 0 {
        return Err(Error::Config("empty grid: every searched key needs at least one value".into()));
    }
    if size > GRID_CONFIRM_LIMIT && !a.confirm {
        return Err(Error::Config(format!("grid has {size} points; pass --confirm to run more than {GRID_CONFIRM_LIMIT}")));
    }
    let points = spec.points();
    for p in &points {
        p.config.validate()?;
    }
    let out = &a.out.out;
    create_dir(out)?;
    let csv_path = out.join("grid.csv");
    let done = if a.resume && csv_path.exists() { report::read_grid(&csv_path, &points)? } else { Vec::new() };
    let todo: Vec<&GridPoint> = points.iter().filter(|p| !done.iter().any(|r| r.matches(p))).collect();
    if a.resume {
        println!("resuming: {} of {size} points already done", size - todo.len());
    }

    let (train, _) = dataset.load(Split::Train)?;
    let (val, _) = dataset.load(Split::Val)?;
    let train = train.sample(grid.train_samples, &mut seeded_rng(derive_seed(grid.seed, SUBSET_STREAM)))?;
    let val = val.sample(grid.val_samples, &mut seeded_rng(derive_seed(grid.seed, SUBSET_STREAM + 1)))?;

    let rows = Mutex::new(done);
    let record = |row: report::GridRow| -> Result<()> {
        let mut rows = rows.lock().expect("grid rows lock");
        rows.push(row);
        rows.sort_by_key(|r| r.point.index);
        report::write_grid(&csv_path, &rows)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        todo.par_iter().try_for_each(|point| {
            let start = Instant::now();
            let row = match run_grid_point(point, &train, &val, grid.patience) {
                Ok(r) => report::GridRow {
                    point: (*point).clone(),
                    mean_auc: r.mean_auc,
                    best_epoch: r.report.best_epoch,
                    epochs_run: r.report.epochs.len(),
                    wall: start.elapsed(),
                    status: "ok".into(),
                },
                Err(e) => {
                    log::warn!("grid point {} failed: {e}", point.index);
                    report::GridRow {
                        point: (*point).clone(),
                        mean_auc: None,
                        best_epoch: None,
                        epochs_run: 0,
                        wall: start.elapsed(),
                        status: format!("error: {e}"),
                    }
                }
            };
            record(row)
        })
    })?;

    let rows = rows.into_inner().expect("grid rows lock");
    let candidates: Vec<(usize, Option<f64>)> =
        rows.iter().map(|r| (r.point.index, r.mean_auc.filter(|_| r.status == "ok"))).collect();
    let best = &rows[rank_best(&candidates).expect("grid is non-empty")];
    let c = &best.point.config;
    let best_config = RunConfig {
        n_layers: c.n_layers,
        dmodel: c.dmodel,
        dff: c.dff,
        n_heads: c.n_heads,
        dropout_rate: c.dropout_rate,
        lr_factor: c.lr_factor,
        batch_size: c.batch_size,
        warmup: c.warmup,
        uncertainty_weighting: c.uncertainty_weighting,
        l2_factor: c.l2_factor,
        seed: grid.seed,
        max_epochs: best.point.max_epochs,
        patience: grid.patience,
        n_features: Some(c.n_features),
        n_tasks: Some(c.n_tasks),
        max_timesteps: Some(c.max_timesteps),
    };
    write_json(&out.join("best_config.json"), &best_config)?;
    let auc = best.mean_auc.map_or_else(|| "—".to_string(), |v| format!("{v:.4}"));
    println!("best point {} with mean validation AUC {auc}", best.point.index);
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let dataset = Dataset::open(&a.manifest)?;
    let (data, _) = dataset.load(a.split)?;
    let m = &dataset.manifest;
    let out = &a.out.out;
    create_dir(out)?;
    let counts = label_counts(&data.labels, &data.label_mask)?;

    let mut runs = Vec::new();
    let mut first_reports: Vec<RocReport> = Vec::new();
    let many = a.checkpoints.len() > 1;
    for (k, path) in a.checkpoints.iter().enumerate() {
        let ckpt = Checkpoint::load(path)?;
        check_compatible(ckpt.config(), m.n_features, m.n_tasks, m.timesteps)?;
        let probs = ckpt.model.predict_proba(&data.x, &data.pad_mask)?;
        let mut aucs = Vec::with_capacity(m.n_tasks);
        let mut reports = Vec::new();
        for j in 0..m.n_tasks {
            let (idx, labels) = data.task_labels(j);
            let scores: Vec<f64> = idx.iter().map(|&i| probs.data()[i * m.n_tasks + j]).collect();
            match RocReport::new(j + 1, &scores, &labels, &a.thresholds) {
                Ok(r) => {
                    aucs.push(Some(r.auc));
                    reports.push(r);
                }
                Err(sst_core::Error::Data(msg)) => {
                    log::info!("{msg}; reported as skipped");
                    aucs.push(None);
                }
                Err(e) => return Err(e.into()),
            }
        }
        let suffix = if many { format!("_{}", k + 1) } else { String::new() };
        report::write_roc(&out.join(format!("roc{suffix}.csv")), &reports)?;
        report::write_rates(&out.join(format!("rates{suffix}.csv")), &reports)?;
        runs.push(RunAucs { aucs, counts: counts.clone() });
        if k == 0 {
            first_reports = reports;
        }
    }

    let summary = multi_seed_report(&runs)?;
    report::write_summary(&out.join("report.csv"), &summary)?;
    let plot: Vec<usize> = if a.roc_tasks.is_empty() {
        first_reports
            .iter()
            .fold(None::<&RocReport>, |best, r| match best {
                Some(b) if b.auc >= r.auc => Some(b),
                _ => Some(r),
            })
            .map(|r| vec![r.task_id])
            .unwrap_or_default()
    } else {
        a.roc_tasks.clone()
    };
    for task in plot {
        match first_reports.iter().find(|r| r.task_id == task) {
            Some(r) => report::write_text(&out.join(format!("roc_task{task}.svg")), &report::roc_svg(r))?,
            None => log::warn!("task {task} has no ROC curve on the {} split", a.split.name()),
        }
    }
    print!("{}", render_table(&summary));
    Ok(())
}
