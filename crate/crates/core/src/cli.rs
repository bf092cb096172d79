//! The `ipae` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 numeric
//! divergence, 3 I/O error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::datasets::{
    gen_gmm, load_mnist_dir, read_dataset_csv, write_dataset_csv, DatasetMeta, LabeledDataset, MnistFiles,
    DEFAULT_DIGITS, DEFAULT_MAX_N, GMM_VARIANCE,
};
use crate::error::{Error, Result};
use crate::eval::sweep::{summarize, summary_csv, sweep, sweep_csv, RunStatus, SweepData, SweepPlan};
use crate::eval::{evaluate, write_artifacts, EvalOptions};
use crate::nn::Activation;
use crate::objectives::RegularizerKind;
use crate::train::{train, write_metrics_csv, TrainOptions};
use crate::util::{create_dir, sha256_file, write_atomic};

pub const DATA_DIR_ENV: &str = "IPAE_DATA_DIR";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SUMMARY_FILE: &str = "sweep_summary.csv";

#[derive(Debug, Parser)]
#[command(name = "ipae", version, about = "Information potential auto-encoders and VAE baselines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the 25-component toy mixture as toy.csv plus toy.meta.json.
    GenData(GenDataArgs),
    /// Train one model and write checkpoint.json, metrics.csv and manifest.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write embeddings.csv, recon.csv and report.json.
    Eval(EvalArgs),
    /// Train and evaluate every (beta, nj, repeat) combination.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File stem for the CSV and its sidecar.
    #[arg(long, default_value = "toy")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// A dataset CSV or a directory of MNIST IDX files. Relative paths that
    /// do not exist are looked up under $IPAE_DATA_DIR, which is also the
    /// default.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Digits kept from MNIST.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DIGITS.to_vec())]
    pub digits: Vec<u8>,
    /// Maximum MNIST training rows.
    #[arg(long, default_value_t = DEFAULT_MAX_N)]
    pub max_n: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's logging interval.
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Record wall-clock milliseconds in metrics.csv (breaks byte-for-byte
    /// reproducibility).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Training config; defaults to the manifest next to the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fit a linear probe on training-split codes and report its test error.
    #[arg(long)]
    pub probe: bool,
    /// Use sampled codes mu + sigma * eps instead of mu.
    #[arg(long)]
    pub sampled: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Held-out CSV scored after training; defaults to the training data
    /// (or the MNIST test split).
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub betas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub njs: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub probe: bool,
    #[arg(long)]
    pub log_every: Option<usize>,
}

/// Everything needed to re-run a training command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub build: String,
    pub command: String,
    pub config: TrainConfig,
    pub data: DataRecord,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub path: PathBuf,
    /// SHA-256 of every file read, keyed by file name.
    pub sha256: BTreeMap<String, String>,
    pub digits: Option<Vec<u8>>,
    pub max_n: Option<usize>,
}

pub fn build_id() -> String {
    match option_env!("IPAE_BUILD_ID") {
        Some(id) => format!("{} ({id})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Resolved input data: a training set and, for MNIST, a test split.
pub struct LoadedData {
    pub train: LabeledDataset,
    pub test: Option<LabeledDataset>,
    pub record: DataRecord,
}

/// Resolves `--data` against `$IPAE_DATA_DIR`.
pub fn resolve_data_path(arg: Option<&Path>) -> Result<PathBuf> {
    let root = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    match (arg, root) {
        (Some(p), Some(root)) if p.is_relative() && !p.exists() => Ok(root.join(p)),
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(root)) => Ok(root),
        (None, None) => Err(Error::config("--data", format!("no path given and {DATA_DIR_ENV} is unset"))),
    }
}

pub fn load_data(args: &DataArgs, seed: u64) -> Result<LoadedData> {
    let path = resolve_data_path(args.data.as_deref())?;
    let mut sha256 = BTreeMap::new();
    let mut hash = |p: &Path| -> Result<()> {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        sha256.insert(name, sha256_file(p)?);
        Ok(())
    };
    if path.is_dir() {
        let files = MnistFiles::in_dir(&path);
        let (train, test) = load_mnist_dir(&path, &args.digits, Some(args.max_n), seed)?;
        hash(&files.train_images)?;
        hash(&files.train_labels)?;
        if files.has_test() {
            hash(&files.test_images)?;
            hash(&files.test_labels)?;
        }
        Ok(LoadedData {
            train,
            test: Some(test),
            record: DataRecord {
                path,
                sha256,
                digits: Some(args.digits.clone()),
                max_n: Some(args.max_n),
            },
        })
    } else {
        let (train, _) = read_dataset_csv(&path)?;
        hash(&path)?;
        Ok(LoadedData {
            train,
            test: None,
            record: DataRecord {
                path,
                sha256,
                digits: None,
                max_n: None,
            },
        })
    }
}

fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    create_dir(&args.out)?;
    let ds = gen_gmm(args.seed);
    let centers = ds.centers.as_ref().map(|c| c.row_iter().map(<[f64]>::to_vec).collect());
    let meta = DatasetMeta {
        seed: args.seed,
        rows: ds.len(),
        num_classes: ds.num_classes,
        centers,
        covariance: Some(GMM_VARIANCE),
    };
    let path = args.out.join(format!("{}.csv", args.name));
    write_dataset_csv(&path, &ds, &meta)?;
    info!("wrote {} rows to {}", ds.len(), path.display());
    Ok(())
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(m).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), format!("{json}\n").as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        what: path.display().to_string(),
        source,
    })
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut config = TrainConfig::load(&args.config)?;
    if let Some(n) = args.log_every {
        config.log_every = n;
        config.validate()?;
    }
    let data = load_data(&args.data, config.seed)?;
    create_dir(&args.out)?;
    let mut manifest = Manifest {
        format: "ipae-manifest".into(),
        build: build_id(),
        command: "train".into(),
        config,
        data: data.record.clone(),
        started_unix: now_unix(),
        finished_unix: None,
        status: "running".into(),
    };
    write_manifest(&args.out, &manifest)?;

    let result = train(&config, &data.train.x, TrainOptions { timing: args.timing });
    let outcome = match result {
        Ok(o) => o,
        Err(Error::Diverged { step, reason, last_good }) => {
            Checkpoint::from_codec(&last_good, config.seed).save(&args.out.join(CHECKPOINT_FILE))?;
            manifest.status = "diverged".into();
            manifest.finished_unix = Some(now_unix());
            write_manifest(&args.out, &manifest)?;
            return Err(Error::Diverged { step, reason, last_good });
        }
        Err(e) => return Err(e),
    };
    Checkpoint::from_codec(&outcome.codec, config.seed).save(&args.out.join(CHECKPOINT_FILE))?;
    write_metrics_csv(&args.out.join(METRICS_FILE), &outcome.metrics)?;

    let eval_set = data.test.as_ref().unwrap_or(&data.train);
    let ev = evaluate(&outcome.codec, eval_set, &config, &EvalOptions { seed: config.seed, ..Default::default() })?;
    write_artifacts(&args.out, &ev, eval_set)?;
    if let Some(e) = ev.report.e_metric {
        info!("E = {e:.6}");
    }
    manifest.status = "ok".into();
    manifest.finished_unix = Some(now_unix());
    write_manifest(&args.out, &manifest)
}

/// The training config behind a checkpoint: `--config`, else the manifest
/// beside it, else the preset defaults for its codec.
fn eval_config(args: &EvalArgs, ckpt: &Checkpoint) -> Result<TrainConfig> {
    if let Some(p) = &args.config {
        return TrainConfig::load(p);
    }
    let beside = args.checkpoint.with_file_name(MANIFEST_FILE);
    if beside.is_file() {
        let m = read_manifest(&beside)?;
        if m.config.codec == ckpt.codec {
            return Ok(m.config);
        }
        warn!("manifest codec differs from the checkpoint, using defaults");
    }
    let mut cfg = match ckpt.codec.output_activation {
        Activation::Sigmoid => TrainConfig::mnist(RegularizerKind::InformationPotential, 0.0),
        _ => TrainConfig::toy(RegularizerKind::InformationPotential, 0.0),
    };
    cfg.codec = ckpt.codec;
    cfg.seed = ckpt.seed;
    Ok(cfg)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let codec = ckpt.to_codec()?;
    let config = eval_config(args, &ckpt)?;
    let data = load_data(&args.data, config.seed)?;
    let (eval_set, probe_train) = match &data.test {
        Some(test) => (test, &data.train),
        None => {
            if args.probe {
                warn!("no separate test split: the probe is scored on its own training rows");
            }
            (&data.train, &data.train)
        }
    };
    let opts = EvalOptions {
        probe_train: args.probe.then_some(probe_train),
        sampled: args.sampled,
        seed: config.seed,
    };
    let ev = evaluate(&codec, eval_set, &config, &opts)?;
    write_artifacts(&args.out, &ev, eval_set)?;
    if let Some(e) = ev.report.e_metric {
        info!("E = {e:.6}");
    }
    if let Some(p) = ev.report.probe_err {
        info!("probe error = {:.4}%", 100.0 * p);
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut base = TrainConfig::load(&args.config)?;
    if let Some(n) = args.log_every {
        base.log_every = n;
    }
    let data = load_data(&args.data, base.seed)?;
    let held_out = match &args.eval_data {
        Some(p) => Some(read_dataset_csv(&resolve_data_path(Some(p))?)?.0),
        None => None,
    };
    let eval_set = held_out.as_ref().or(data.test.as_ref()).unwrap_or(&data.train);
    let plan = SweepPlan {
        base,
        betas: args.betas.clone(),
        njs: args.njs.clone(),
        repeats: args.repeats,
        jobs: args.jobs,
        probe: args.probe,
    };
    plan.validate()?;
    create_dir(&args.out)?;
    let manifest = Manifest {
        format: "ipae-manifest".into(),
        build: build_id(),
        command: format!(
            "sweep betas={:?} njs={:?} repeats={} eval_data={:?}",
            args.betas, args.njs, args.repeats, args.eval_data
        ),
        config: base,
        data: data.record.clone(),
        started_unix: now_unix(),
        finished_unix: None,
        status: "running".into(),
    };
    write_manifest(&args.out, &manifest)?;

    let rows = sweep(&plan, &SweepData { train: &data.train, eval: eval_set }, Some(&args.out))?;
    write_atomic(&args.out.join(SWEEP_FILE), sweep_csv(&rows).as_bytes())?;
    write_atomic(&args.out.join(SUMMARY_FILE), summary_csv(&summarize(&rows)).as_bytes())?;
    let done = rows.iter().filter(|r| r.status == RunStatus::Ok).count();
    write_manifest(
        &args.out,
        &Manifest {
            finished_unix: Some(now_unix()),
            status: format!("{done}/{} runs completed", rows.len()),
            ..manifest
        },
    )?;
    info!("{done}/{} runs completed", rows.len());
    if done == 0 {
        return Err(Error::Contract("no sweep run completed".into()));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_exits_zero_and_bad_flags_exit_one() {
        assert_eq!(main_with_args(["ipae", "--help"]), 0);
        assert_eq!(main_with_args(["ipae", "train", "--bogus"]), 1);
        assert_eq!(main_with_args(["ipae"]), 1);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let io = Error::io("x", std::io::Error::from(std::io::ErrorKind::NotFound));
        assert_eq!(io.exit_code(), 3);
        assert_eq!(Error::config("reg.kind", "bad").exit_code(), 1);
        assert_eq!(Error::Numeric { context: "x".into() }.exit_code(), 2);
    }
}
