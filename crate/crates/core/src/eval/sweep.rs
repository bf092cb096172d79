//! Factorial sweeps over beta, partner count and repeat.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate, write_artifacts, EvalOptions};
use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::train::{train, write_metrics_csv, TrainOptions};
use crate::util::{create_dir, write_atomic};

pub const SWEEP_HEADER: &str = "kind,beta,nj,repeat,seed,E,probe_err,final_distortion,final_mi_bound,status";
pub const SUMMARY_HEADER: &str =
    "kind,beta,nj,completed,runs,E_mean,E_std,probe_err_mean,probe_err_std,final_distortion_mean,final_mi_bound_mean";

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub base: TrainConfig,
    pub betas: Vec<f64>,
    pub njs: Vec<usize>,
    pub repeats: usize,
    /// Worker threads; 1 runs cells in order on the calling thread.
    pub jobs: usize,
    pub probe: bool,
}

pub struct SweepData<'a> {
    pub train: &'a LabeledDataset,
    /// Rows scored after training.
    pub eval: &'a LabeledDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged,
    Failed,
}

impl RunStatus {
    fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged => "diverged",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: String,
    pub beta: f64,
    pub nj: usize,
    pub repeat: usize,
    pub seed: u64,
    #[serde(rename = "E")]
    pub e_metric: Option<f64>,
    pub probe_err: Option<f64>,
    pub final_distortion: Option<f64>,
    pub final_mi_bound: Option<f64>,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub kind: String,
    pub beta: f64,
    pub nj: usize,
    pub completed: usize,
    pub runs: usize,
    #[serde(rename = "E_mean")]
    pub e_mean: Option<f64>,
    #[serde(rename = "E_std")]
    pub e_std: Option<f64>,
    pub probe_err_mean: Option<f64>,
    pub probe_err_std: Option<f64>,
    pub final_distortion_mean: Option<f64>,
    pub final_mi_bound_mean: Option<f64>,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::config("betas", "empty list"));
        }
        if self.njs.is_empty() {
            return Err(Error::config("njs", "empty list"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        for cfg in self.configs() {
            cfg.1.validate()?;
        }
        Ok(())
    }

    /// Every `(repeat, config)` in table order: beta, then nj, then repeat.
    pub fn configs(&self) -> Vec<(usize, TrainConfig)> {
        let mut out = Vec::with_capacity(self.betas.len() * self.njs.len() * self.repeats);
        for &beta in &self.betas {
            for &nj in &self.njs {
                for r in 0..self.repeats {
                    let mut cfg = self.base;
                    cfg.reg.beta = beta;
                    cfg.reg.nj = nj;
                    cfg.seed = self.base.seed.wrapping_add(r as u64);
                    out.push((r, cfg));
                }
            }
        }
        out
    }
}

pub fn kind_name(cfg: &TrainConfig) -> String {
    serde_json::to_value(cfg.reg.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Directory of one run below the sweep root.
pub fn run_dir(root: &Path, cfg: &TrainConfig, repeat: usize) -> PathBuf {
    root.join(format!("{}_beta{}_nj{}", kind_name(cfg), cfg.reg.beta, cfg.reg.nj))
        .join(format!("r{repeat}"))
}

fn run_one(cfg: &TrainConfig, repeat: usize, data: &SweepData<'_>, probe: bool, dir: Option<&Path>) -> SweepRow {
    let mut row = SweepRow {
        kind: kind_name(cfg),
        beta: cfg.reg.beta,
        nj: cfg.reg.nj,
        repeat,
        seed: cfg.seed,
        e_metric: None,
        probe_err: None,
        final_distortion: None,
        final_mi_bound: None,
        status: RunStatus::Failed,
    };
    let result = (|| -> Result<()> {
        if let Some(dir) = dir {
            create_dir(dir)?;
            write_atomic(&dir.join("config.json"), cfg.to_json().as_bytes())?;
        }
        let outcome = match train(cfg, &data.train.x, TrainOptions::default()) {
            Ok(o) => o,
            Err(Error::Diverged { step, reason, last_good }) => {
                row.status = RunStatus::Diverged;
                if let Some(dir) = dir {
                    Checkpoint::from_codec(&last_good, cfg.seed).save(&dir.join("checkpoint.json"))?;
                }
                return Err(Error::Diverged { step, reason, last_good });
            }
            Err(e) => return Err(e),
        };
        if let Some(last) = outcome.metrics.last() {
            row.final_distortion = Some(last.distortion);
            row.final_mi_bound = Some(last.mi_bound);
        }
        let opts = EvalOptions {
            probe_train: probe.then_some(data.train),
            sampled: false,
            seed: cfg.seed,
        };
        let ev = evaluate(&outcome.codec, data.eval, cfg, &opts)?;
        row.e_metric = ev.report.e_metric;
        row.probe_err = ev.report.probe_err;
        if let Some(dir) = dir {
            Checkpoint::from_codec(&outcome.codec, cfg.seed).save(&dir.join("checkpoint.json"))?;
            write_metrics_csv(&dir.join("metrics.csv"), &outcome.metrics)?;
            write_artifacts(dir, &ev, data.eval)?;
        }
        row.status = RunStatus::Ok;
        Ok(())
    })();
    match result {
        Ok(()) => info!("{} beta={} nj={} repeat={} done", row.kind, row.beta, row.nj, repeat),
        Err(e) => warn!("{} beta={} nj={} repeat={} failed: {e}", row.kind, row.beta, row.nj, repeat),
    }
    row
}

/// Runs every cell of `plan`. Failed runs are kept in the table with
/// [`RunStatus::Failed`] or [`RunStatus::Diverged`] and empty values.
///
/// With `out` set, each run writes its config, checkpoint, metrics and
/// evaluation artifacts to [`run_dir`].
pub fn sweep(plan: &SweepPlan, data: &SweepData<'_>, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let configs = plan.configs();
    let work = |(r, cfg): &(usize, TrainConfig)| {
        let dir = out.map(|root| run_dir(root, cfg, *r));
        run_one(cfg, *r, data, plan.probe, dir.as_deref())
    };
    if plan.jobs == 1 {
        return Ok(configs.iter().map(work).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    Ok(pool.install(|| configs.par_iter().map(work).collect()))
}

fn mean_std(values: &mut [f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

/// Per-cell mean and sample standard deviation over completed runs.
pub fn summarize(rows: &[SweepRow]) -> Vec<CellSummary> {
    let mut cells: Vec<(&str, f64, usize)> = Vec::new();
    for r in rows {
        if !cells.iter().any(|c| c.0 == r.kind && c.1 == r.beta && c.2 == r.nj) {
            cells.push((&r.kind, r.beta, r.nj));
        }
    }
    cells
        .into_iter()
        .map(|(kind, beta, nj)| {
            let runs: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.kind == kind && r.beta == beta && r.nj == nj)
                .collect();
            let done: Vec<&&SweepRow> = runs.iter().filter(|r| r.status == RunStatus::Ok).collect();
            let collect = |f: fn(&SweepRow) -> Option<f64>| -> Vec<f64> { done.iter().filter_map(|r| f(r)).collect() };
            let (e_mean, e_std) = mean_std(&mut collect(|r| r.e_metric));
            let (probe_err_mean, probe_err_std) = mean_std(&mut collect(|r| r.probe_err));
            CellSummary {
                kind: kind.to_owned(),
                beta,
                nj,
                completed: done.len(),
                runs: runs.len(),
                e_mean,
                e_std,
                probe_err_mean,
                probe_err_std,
                final_distortion_mean: mean_std(&mut collect(|r| r.final_distortion)).0,
                final_mi_bound_mean: mean_std(&mut collect(|r| r.final_mi_bound)).0,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.kind,
            r.beta,
            r.nj,
            r.repeat,
            r.seed,
            opt(r.e_metric),
            opt(r.probe_err),
            opt(r.final_distortion),
            opt(r.final_mi_bound),
            r.status.as_str()
        )
        .expect("write to String");
    }
    out
}

pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.kind,
            c.beta,
            c.nj,
            c.completed,
            c.runs,
            opt(c.e_mean),
            opt(c.e_std),
            opt(c.probe_err_mean),
            opt(c.probe_err_std),
            opt(c.final_distortion_mean),
            opt(c.final_mi_bound_mean)
        )
        .expect("write to String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecSpec;
    use crate::datasets::gen_gmm;
    use crate::objectives::RegularizerKind;

    fn tiny() -> TrainConfig {
        TrainConfig {
            codec: CodecSpec {
                hidden_dim: 8,
                latent_dim: 2,
                ..CodecSpec::toy()
            },
            batch_size: 32,
            total_batches: 3,
            log_every: 1,
            seed: 10,
            ..TrainConfig::toy(RegularizerKind::InformationPotential, 0.01)
        }
    }

    fn plan(jobs: usize) -> SweepPlan {
        SweepPlan {
            base: tiny(),
            betas: vec![1e-5, 0.01, 0.1],
            njs: vec![1, 8],
            repeats: 3,
            jobs,
            probe: false,
        }
    }

    #[test]
    fn factorial_counts() {
        let ds = gen_gmm(0);
        let data = SweepData { train: &ds, eval: &ds };
        let rows = sweep(&plan(1), &data, None).unwrap();
        assert_eq!(rows.len(), 18);
        let cells = summarize(&rows);
        assert_eq!(cells.len(), 6);
        assert!(cells.iter().all(|c| c.runs == 3 && c.completed == 3));
        assert_eq!(rows[0].seed, 10);
        assert_eq!(rows[2].seed, 12);
        assert_eq!(sweep_csv(&rows).lines().count(), 19);
    }

    #[test]
    fn parallel_matches_serial() {
        let ds = gen_gmm(0);
        let data = SweepData { train: &ds, eval: &ds };
        let mut p = plan(1);
        p.betas.truncate(1);
        let serial = sweep(&p, &data, None).unwrap();
        p.jobs = 3;
        let parallel = sweep(&p, &data, None).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn failures_are_recorded_and_excluded() {
        let ds = gen_gmm(0);
        let wrong = LabeledDataset::new(crate::matrix::Matrix::zeros(4, 3), vec![0; 4], 1, None).unwrap();
        let data = SweepData { train: &ds, eval: &wrong };
        let mut p = plan(1);
        p.betas.truncate(1);
        p.njs.truncate(1);
        p.repeats = 2;
        let rows = sweep(&p, &data, None).unwrap();
        assert!(rows.iter().all(|r| r.status == RunStatus::Failed));
        let cells = summarize(&rows);
        assert_eq!((cells[0].completed, cells[0].runs), (0, 2));
        assert_eq!(cells[0].e_mean, None);
    }

    #[test]
    fn mean_std_ignores_order() {
        let (m1, s1) = mean_std(&mut [0.3, 0.1, 0.2]);
        let (m2, s2) = mean_std(&mut [0.2, 0.3, 0.1]);
        assert_eq!((m1, s1), (m2, s2));
        assert!((m1.unwrap() - 0.2).abs() < 1e-15);
        assert!((s1.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(mean_std(&mut [5.0]), (Some(5.0), Some(0.0)));
    }

    #[test]
    fn empty_lists_rejected() {
        let mut p = plan(1);
        p.njs.clear();
        let ds = gen_gmm(0);
        assert!(sweep(&p, &SweepData { train: &ds, eval: &ds }, None).is_err());
    }
}
