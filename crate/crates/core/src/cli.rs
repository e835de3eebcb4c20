//! `qffn` command line: `train`, `sweep`, `ablate` and `probe`.
//!
//! Every output file is written atomically, and only after the whole
//! computation for it has finished.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Command, RunConfig};
use crate::diagnostics::{grad_variance_probe, ProbeRow};
use crate::encoder::{save_weights, FfnKind};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io::{atomic_write, csv_bytes};
use crate::trainer::{train, EpochRecord, MetricsReport};

#[derive(Debug, Parser)]
#[command(name = "qffn", version, about = "Quantum feedforward BERT experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Train one model and write metrics, epoch series and weights.
    Train(RunArgs),
    /// Depth × fraction grid plus classical baseline rows.
    Sweep(RunArgs),
    /// Sweep with the vanilla (no-residual, RY-only) block.
    Ablate(RunArgs),
    /// Gradient-variance probe across circuit depths.
    Probe(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `train.seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// `metrics.json` document.
#[derive(Debug, Serialize)]
pub struct MetricsDocument<'a> {
    pub validation_accuracy: f64,
    pub training_accuracy: f64,
    pub gap: f64,
    pub accuracy_per_param: f64,
    pub param_total: usize,
    pub epochs: &'a [EpochRecord],
    pub wall_clock_s: Option<f64>,
    pub config_echo: &'a RunConfig,
}

/// One row of `table.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub model: String,
    pub layers: String,
    pub fraction: f64,
    pub val_acc: f64,
    pub train_acc: f64,
    pub gap: f64,
    pub acc_per_param: f64,
}

pub const TABLE_COLUMNS: [&str; 7] = ["model", "layers", "fraction", "val_acc", "train_acc", "gap", "acc_per_param"];
pub const EPOCH_COLUMNS: [&str; 5] = ["epoch", "train_loss", "val_loss", "train_acc", "val_acc"];
pub const PROBE_COLUMNS: [&str; 5] = ["depth", "variant", "variance", "num_samples", "seed"];

struct Loaded {
    config: RunConfig,
    raw: String,
    out: PathBuf,
}

fn load(args: &RunArgs, command: Command) -> Result<Loaded> {
    let (mut config, raw) = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::config("output_dir", "no output directory given (config or --out)"))?;
    config.output_dir = Some(out.clone());
    config.validate(command)?;
    Ok(Loaded { config, raw, out })
}

fn metrics_json(report: &MetricsReport, config: &RunConfig) -> Result<Vec<u8>> {
    let doc = MetricsDocument {
        validation_accuracy: report.validation_accuracy,
        training_accuracy: report.training_accuracy,
        gap: report.gap,
        accuracy_per_param: report.accuracy_per_param,
        param_total: report.param_total,
        epochs: &report.epochs,
        wall_clock_s: config.record_wall_clock.then_some(report.wall_clock_s),
        config_echo: config,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Trains the configured model. Writes `metrics.json`, `epochs.csv`,
/// `weights.bin`, `weights.json` and a verbatim `config.json`.
pub fn cmd_train(args: &RunArgs) -> Result<MetricsReport> {
    let Loaded { config, raw, out } = load(args, Command::Train)?;
    let data = config.prepare_data()?;
    let model_config = config.model_config(config.ffn_kind, config.pqc_layers, data.vocab_size);
    model_config.validate(config.strict_depths)?;
    let (model, report) = train(&model_config, &config.train, &data.train, &data.val)?;

    let metrics = metrics_json(&report, &config)?;
    let epochs = csv_bytes(&report.epochs)?;
    atomic_write(&out.join("config.json"), raw.as_bytes())?;
    save_weights(&model, &out.join("weights.bin"), &out.join("weights.json"))?;
    atomic_write(&out.join("epochs.csv"), &epochs)?;
    atomic_write(&out.join("metrics.json"), &metrics)?;
    println!("{} {}", model_config.ffn_kind.name(), report.summary_line());
    Ok(report)
}

#[derive(Debug, Clone)]
struct Cell {
    kind: FfnKind,
    layers: Option<usize>,
    fraction: f64,
}

impl Cell {
    fn label(&self) -> String {
        match self.layers {
            Some(l) => format!("{}_L{l}_f{}", self.kind.name(), self.fraction),
            None => format!("{}_f{}", self.kind.name(), self.fraction),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<TableRow>,
    pub failures: Vec<(String, String)>,
}

/// Runs every (depth, fraction) cell for the configured quantum block (or
/// `force_kind`), plus one classical row per fraction when
/// `sweep.include_baseline` is set. Failed cells are listed in
/// `failures.csv`; the other cells still run.
pub fn cmd_sweep(args: &RunArgs, force_kind: Option<FfnKind>) -> Result<SweepOutcome> {
    let Loaded { mut config, raw, out } = load(args, Command::Sweep)?;
    let kind = force_kind.unwrap_or(match config.ffn_kind {
        FfnKind::Classical => FfnKind::Qffn,
        k => k,
    });
    config.ffn_kind = kind;
    config.validate(Command::Sweep)?;
    let data = config.prepare_data()?;

    let mut cells = Vec::new();
    if config.sweep.include_baseline {
        for &fraction in &config.sweep.fractions {
            cells.push(Cell { kind: FfnKind::Classical, layers: None, fraction });
        }
    }
    for &depth in &config.sweep.depths {
        for &fraction in &config.sweep.fractions {
            cells.push(Cell { kind, layers: Some(depth), fraction });
        }
    }

    let results = Exec::default().map(&cells, |_, cell| -> Result<(RunConfig, MetricsReport)> {
        let mut cell_config = config.clone();
        cell_config.ffn_kind = cell.kind;
        cell_config.pqc_layers = cell.layers.unwrap_or(config.pqc_layers);
        cell_config.train.fraction = cell.fraction;
        let model_config = cell_config.model_config(cell.kind, cell_config.pqc_layers, data.vocab_size);
        model_config.validate(config.strict_depths)?;
        let (_, report) = train(&model_config, &cell_config.train, &data.train, &data.val)?;
        Ok((cell_config, report))
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cell, result) in cells.iter().zip(results) {
        match result {
            Ok((cell_config, report)) => {
                let dir = out.join("cells").join(cell.label());
                atomic_write(&dir.join("metrics.json"), &metrics_json(&report, &cell_config)?)?;
                atomic_write(&dir.join("epochs.csv"), &csv_bytes(&report.epochs)?)?;
                rows.push(TableRow {
                    model: cell.kind.name().to_string(),
                    layers: cell.layers.map_or_else(|| "-".to_string(), |l| l.to_string()),
                    fraction: cell.fraction,
                    val_acc: report.validation_accuracy,
                    train_acc: report.training_accuracy,
                    gap: report.gap,
                    acc_per_param: report.accuracy_per_param,
                });
            }
            Err(e) => {
                eprintln!("cell {} failed: {e}", cell.label());
                failures.push((cell.label(), e.to_string()));
            }
        }
    }

    atomic_write(&out.join("config.json"), raw.as_bytes())?;
    atomic_write(&out.join("table.csv"), &with_header(&TABLE_COLUMNS, csv_bytes(&rows)?))?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["cell", "error"])?;
    for (cell, err) in &failures {
        writer.write_record([cell, err])?;
    }
    let failure_bytes = writer
        .into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    atomic_write(&out.join("failures.csv"), &failure_bytes)?;
    for row in &rows {
        println!(
            "{:<13} L={:<2} f={:<4} val_acc={:.4} train_acc={:.4} gap={:.4} acc/param={:.3e}",
            row.model, row.layers, row.fraction, row.val_acc, row.train_acc, row.gap, row.acc_per_param
        );
    }
    Ok(SweepOutcome { rows, failures })
}

/// Serde's CSV writer emits no header for an empty table.
fn with_header(columns: &[&str], bytes: Vec<u8>) -> Vec<u8> {
    if bytes.is_empty() {
        let mut header = columns.join(",").into_bytes();
        header.push(b'\n');
        header
    } else {
        bytes
    }
}

/// Writes `probe.csv` with one row per (variant, depth).
pub fn cmd_probe(args: &RunArgs) -> Result<Vec<ProbeRow>> {
    let Loaded { config, raw, out } = load(args, Command::Probe)?;
    let spec = &config.probe;
    let mut rows = Vec::new();
    for kind in &spec.variants {
        let result = grad_variance_probe(kind.circuit(), &spec.depths, spec.num_samples, config.train.seed)?;
        rows.extend(result.rows);
    }
    atomic_write(&out.join("config.json"), raw.as_bytes())?;
    atomic_write(&out.join("probe.csv"), &csv_bytes(&rows)?)?;
    for r in &rows {
        println!("{:<16} L={:<2} var={:.6e} (n={})", r.variant, r.depth, r.variance, r.num_samples);
    }
    Ok(rows)
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        CliCommand::Train(a) => cmd_train(a).map(|_| 0),
        CliCommand::Sweep(a) => cmd_sweep(a, None).map(|o| i32::from(!o.failures.is_empty())),
        CliCommand::Ablate(a) => cmd_sweep(a, Some(FfnKind::VanillaQffn)).map(|o| i32::from(!o.failures.is_empty())),
        CliCommand::Probe(a) => cmd_probe(a).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run_args(config: &Path, out: &Path) -> RunArgs {
    RunArgs {
        config: config.to_path_buf(),
        out: Some(out.to_path_buf()),
        seed: None,
    }
}
