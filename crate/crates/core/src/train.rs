//! The training loop.
//!
//! Randomness is drawn from one stream seeded by the config, in a fixed
//! order: weight init, then per step the noise block followed by the
//! partner indices. Batch order comes from a stream derived from the seed
//! and the epoch.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::codec::{Codec, NoiseBlock, SIGMA_CEIL};
use crate::config::TrainConfig;
use crate::datasets::batches;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::objectives::{loss_grads_code, LossBreakdown, LossInputs, Partners, RegularizerKind};
use crate::rng::RunRng;
use crate::util::write_atomic;

pub const METRICS_HEADER: &str = "step,total,distortion,mi_bound,h_z_bound,h_z_given_x,ms";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub total: f64,
    pub distortion: f64,
    pub mi_bound: f64,
    pub h_z_bound: f64,
    pub h_z_given_x: f64,
    /// Wall-clock milliseconds since training started; 0 unless timing was
    /// requested, so that metrics files stay reproducible.
    pub ms: u64,
}

impl MetricsRow {
    fn new(step: usize, loss: &LossBreakdown, ms: u64) -> Self {
        Self {
            step,
            total: loss.total,
            distortion: loss.distortion,
            mi_bound: loss.mi_bound,
            h_z_bound: loss.h_z_bound,
            h_z_given_x: loss.h_z_given_x,
            ms,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Fill [`MetricsRow::ms`] with wall-clock time.
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub codec: Codec,
    pub metrics: Vec<MetricsRow>,
    /// Steps where more than 1% of the batch's sigma entries sat at the
    /// ceiling.
    pub sigma_ceiling_steps: usize,
}

/// Runs `config.total_batches` Adam steps on the training loss over the
/// rows of `data`.
///
/// A non-finite loss or gradient aborts with [`Error::Diverged`], carrying
/// the parameters from before the failing step.
pub fn train(config: &TrainConfig, data: &Matrix, opts: TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    if data.cols() != config.codec.input_dim {
        return Err(Error::shape(
            "train data",
            format!("{} columns for the codec", config.codec.input_dim),
            data.cols(),
        ));
    }
    if data.rows() == 0 {
        return Err(Error::Contract("training set is empty".into()));
    }

    let start = Instant::now();
    let mut rng = RunRng::new(config.seed);
    let mut codec = Codec::init(config.codec, &mut rng);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        codec.tensors().iter().map(|t| t.len()),
    );

    let latent = config.codec.latent_dim;
    let mut metrics = Vec::new();
    let mut sigma_ceiling_steps = 0;
    let mut epoch = 0u64;
    let mut queue = batches(data.rows(), config.batch_size, config.seed, epoch).into_iter();

    for step in 1..=config.total_batches {
        let idx = match queue.next() {
            Some(b) => b,
            None => {
                epoch += 1;
                queue = batches(data.rows(), config.batch_size, config.seed, epoch).into_iter();
                queue.next().expect("non-empty dataset yields a batch")
            }
        };
        let x = data.select_rows(&idx);
        let noise = NoiseBlock::sample(x.rows(), config.reg.k, latent, &mut rng);
        let partners = match config.reg.kind {
            RegularizerKind::InformationPotential => Some(Partners::sample(x.rows(), config.reg.nj, &mut rng)?),
            _ => None,
        };
        let inputs = LossInputs {
            x: &x,
            reg: &config.reg,
            distortion: config.distortion,
            noise: &noise,
            partners: partners.as_ref(),
        };

        let diverged = |reason: String, codec: &Codec| Error::Diverged {
            step,
            reason,
            last_good: Box::new(codec.clone()),
        };
        let (loss, grads, code) = match loss_grads_code(&codec, &inputs) {
            Ok(v) => v,
            Err(Error::Numeric { context }) => return Err(diverged(context, &codec)),
            Err(e) => return Err(e),
        };
        if !loss.total.is_finite() {
            return Err(diverged(format!("loss is {}", loss.total), &codec));
        }
        if !grads.is_finite() {
            return Err(diverged("non-finite gradient".into(), &codec));
        }

        let at_ceiling = code.sigma.as_slice().iter().filter(|&&s| s >= SIGMA_CEIL).count();
        if at_ceiling * 100 > code.sigma.as_slice().len() {
            sigma_ceiling_steps += 1;
            if sigma_ceiling_steps == 1 || sigma_ceiling_steps % 100 == 0 {
                log::warn!(
                    "step {step}: {at_ceiling} of {} sigma entries at the ceiling {SIGMA_CEIL} ({sigma_ceiling_steps} such steps so far)",
                    code.sigma.as_slice().len()
                );
            }
        }

        if step % config.log_every == 0 || step == config.total_batches {
            let ms = if opts.timing { start.elapsed().as_millis() as u64 } else { 0 };
            let row = MetricsRow::new(step, &loss, ms);
            log::debug!("step {step}: total {:.6} distortion {:.6} mi {:.6}", row.total, row.distortion, row.mi_bound);
            metrics.push(row);
        }

        let grad_tensors = grads.tensors();
        let mut params = codec.tensors_mut();
        adam.step(&mut params, &grad_tensors)?;
    }

    Ok(TrainOutcome {
        codec,
        metrics,
        sigma_ceiling_steps,
    })
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step, r.total, r.distortion, r.mi_bound, r.h_z_bound, r.h_z_given_x, r.ms
        )
        .expect("write to String");
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_atomic(path, metrics_csv(rows).as_bytes())
}
