//! Evaluation of trained codecs: reconstruction distance to the true
//! mixture means, PCA embeddings, linear probes and bound values.

mod metrics;
mod pca;
mod probe;
pub mod sweep;

pub use metrics::mean_distance_to_centers;
pub use pca::{pca_project, Pca};
pub use probe::{linear_probe, LinearProbe, ProbeConfig};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{reparameterize, Codec, GaussianCode, NoiseBlock};
use crate::config::TrainConfig;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::objectives::{
    bernoulli_distortion, conditional_entropy, ip_mi_bound, mse_distortion, nonparametric_entropy_bound,
    parametric_mi_bound, Distortion, Partners,
};
use crate::rng::RunRng;
use crate::util::write_atomic;

const ENCODE_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions<'a> {
    /// Training rows for the linear probe; no probe when `None`.
    pub probe_train: Option<&'a LabeledDataset>,
    /// Use a sampled code `mu + sigma ⊙ eps` instead of `mu`.
    pub sampled: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub latent_dim: usize,
    pub sampled: bool,
    /// Mean distance of reconstructions to their component means, when the
    /// data carries centers.
    #[serde(rename = "E")]
    pub e_metric: Option<f64>,
    pub probe_err: Option<f64>,
    /// Distortion of the deterministic (or sampled) reconstructions.
    pub distortion: f64,
    pub parametric_mi_bound: f64,
    pub ip_mi_bound: f64,
    pub h_z_bound: f64,
    pub h_z_given_x: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub code: GaussianCode,
    /// Codes used for reconstruction, PCA and probing.
    pub features: Matrix,
    pub recon: Matrix,
    pub pca: Pca,
}

/// Encodes `x` in chunks.
pub fn encode_all(codec: &Codec, x: &Matrix) -> Result<GaussianCode> {
    let n = x.rows();
    let d = codec.spec.latent_dim;
    let mut mu = Matrix::zeros(n, d);
    let mut sigma = Matrix::zeros(n, d);
    for start in (0..n).step_by(ENCODE_CHUNK) {
        let idx: Vec<usize> = (start..(start + ENCODE_CHUNK).min(n)).collect();
        let code = codec.encode(&x.select_rows(&idx))?;
        for (r, &i) in idx.iter().enumerate() {
            mu.row_mut(i).copy_from_slice(code.mu.row(r));
            sigma.row_mut(i).copy_from_slice(code.sigma.row(r));
        }
    }
    GaussianCode::new(mu, sigma)
}

pub fn decode_all(codec: &Codec, z: &Matrix) -> Result<Matrix> {
    let n = z.rows();
    let mut out = Matrix::zeros(n, codec.spec.input_dim);
    for start in (0..n).step_by(ENCODE_CHUNK) {
        let idx: Vec<usize> = (start..(start + ENCODE_CHUNK).min(n)).collect();
        let rec = codec.decode(&z.select_rows(&idx))?;
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(rec.row(r));
        }
    }
    Ok(out)
}

fn features_of(codec: &Codec, x: &Matrix, sampled: bool, rng: &mut RunRng) -> Result<(GaussianCode, Matrix)> {
    let code = encode_all(codec, x)?;
    let feats = if sampled {
        let noise = NoiseBlock::sample(code.batch(), 1, code.latent_dim(), rng);
        reparameterize(&code, &noise)?
    } else {
        code.mu.clone()
    };
    Ok((code, feats))
}

/// Pairwise bounds averaged over minibatch-sized chunks, as in training.
fn chunked_pairwise_bounds(code: &GaussianCode, config: &TrainConfig, rng: &mut RunRng) -> Result<(f64, f64)> {
    let n = code.batch();
    let (mut ip, mut hz) = (0.0, 0.0);
    for start in (0..n).step_by(config.batch_size) {
        let idx: Vec<usize> = (start..(start + config.batch_size).min(n)).collect();
        let chunk = GaussianCode {
            mu: code.mu.select_rows(&idx),
            sigma: code.sigma.select_rows(&idx),
        };
        let noise = NoiseBlock::sample(idx.len(), config.reg.k, code.latent_dim(), rng);
        let partners = Partners::sample(idx.len(), config.reg.nj, rng)?;
        let w = idx.len() as f64 / n as f64;
        ip += w * ip_mi_bound(&chunk, &noise, &partners)?;
        hz += w * nonparametric_entropy_bound(&chunk, &noise, &partners)?;
    }
    Ok((ip, hz))
}

/// Evaluates `codec` on `data`.
///
/// Reconstructions, PCA and probe features use `mu` unless
/// `opts.sampled` is set. Noise for the bound estimates and for sampled
/// codes comes from streams derived from `opts.seed`, so the report is a
/// deterministic function of its inputs.
pub fn evaluate(codec: &Codec, data: &LabeledDataset, config: &TrainConfig, opts: &EvalOptions<'_>) -> Result<Evaluation> {
    if data.dim() != codec.spec.input_dim {
        return Err(Error::Contract(format!(
            "data has {} columns but the checkpoint expects {}",
            data.dim(),
            codec.spec.input_dim
        )));
    }
    if data.is_empty() {
        return Err(Error::Contract("evaluation set is empty".into()));
    }
    let mut feat_rng = RunRng::derived(opts.seed, 2);
    let (code, features) = features_of(codec, &data.x, opts.sampled, &mut feat_rng)?;
    let recon = decode_all(codec, &features)?;

    let e_metric = match &data.centers {
        Some(c) => Some(mean_distance_to_centers(&recon, &data.labels, Some(c))?),
        None => None,
    };
    let distortion = match config.distortion {
        Distortion::Mse => mse_distortion(&data.x, &recon)?,
        Distortion::Bernoulli => bernoulli_distortion(&data.x, &recon)?,
    };

    let probe_err = match opts.probe_train {
        Some(train) => {
            if train.dim() != data.dim() {
                return Err(Error::Contract("probe training set width differs from evaluation set".into()));
            }
            let (_, train_feats) = features_of(codec, &train.x, opts.sampled, &mut feat_rng)?;
            Some(linear_probe(&train_feats, &train.labels, &features, &data.labels, opts.seed)?)
        }
        None => None,
    };

    let (ip, hz) = chunked_pairwise_bounds(&code, config, &mut RunRng::derived(opts.seed, 1))?;
    let pca = pca_project(&features, 2.min(features.rows().saturating_sub(1)).max(1))?;
    let report = EvalReport {
        n: data.len(),
        latent_dim: code.latent_dim(),
        sampled: opts.sampled,
        e_metric,
        probe_err,
        distortion,
        parametric_mi_bound: parametric_mi_bound(&code)?,
        ip_mi_bound: ip,
        h_z_bound: hz,
        h_z_given_x: conditional_entropy(&code),
    };
    Ok(Evaluation {
        report,
        code,
        features,
        recon,
        pca,
    })
}

pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const RECON_FILE: &str = "recon.csv";
pub const REPORT_FILE: &str = "report.json";

/// `sample_id,label,pc1,pc2,mu_0..mu_{d-1}`.
pub fn embeddings_csv(eval: &Evaluation, labels: &[usize]) -> String {
    let d = eval.features.cols();
    let mut out = String::from("sample_id,label,pc1,pc2");
    for j in 0..d {
        write!(out, ",mu_{j}").expect("write to String");
    }
    out.push('\n');
    for (i, label) in labels.iter().enumerate().take(eval.features.rows()) {
        let pc = |c: usize| {
            if c < eval.pca.projection.cols() {
                eval.pca.projection[(i, c)]
            } else {
                0.0
            }
        };
        write!(out, "{i},{label},{},{}", pc(0), pc(1)).expect("write to String");
        for v in eval.features.row(i) {
            write!(out, ",{v}").expect("write to String");
        }
        out.push('\n');
    }
    out
}

/// `sample_id,label,x0,x1,recon_x0,recon_x1,center_x0,center_x1`, for
/// two-dimensional data with centers.
pub fn recon_csv(eval: &Evaluation, data: &LabeledDataset) -> Option<String> {
    let centers = data.centers.as_ref()?;
    if data.dim() != 2 {
        return None;
    }
    let mut out = String::from("sample_id,label,x0,x1,recon_x0,recon_x1,center_x0,center_x1\n");
    for i in 0..data.len() {
        let (x, r, c) = (data.x.row(i), eval.recon.row(i), centers.row(data.labels[i]));
        writeln!(out, "{i},{},{},{},{},{},{},{}", data.labels[i], x[0], x[1], r[0], r[1], c[0], c[1])
            .expect("write to String");
    }
    Some(out)
}

/// Writes `embeddings.csv`, `report.json` and, for the toy data,
/// `recon.csv` into `dir`.
pub fn write_artifacts(dir: &Path, eval: &Evaluation, data: &LabeledDataset) -> Result<()> {
    crate::util::create_dir(dir)?;
    write_atomic(&dir.join(EMBEDDINGS_FILE), embeddings_csv(eval, &data.labels).as_bytes())?;
    if let Some(csv) = recon_csv(eval, data) {
        write_atomic(&dir.join(RECON_FILE), csv.as_bytes())?;
    }
    let json = serde_json::to_string_pretty(&eval.report).expect("report serializes");
    write_atomic(&dir.join(REPORT_FILE), format!("{json}\n").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::gen_gmm;
    use crate::objectives::RegularizerKind;

    #[test]
    fn zero_network_on_toy_data() {
        let ds = gen_gmm(2);
        let cfg = TrainConfig::toy(RegularizerKind::InformationPotential, 0.001);
        let codec = Codec::zeros(cfg.codec);
        let ev = evaluate(&codec, &ds, &cfg, &EvalOptions::default()).unwrap();
        assert!(ev.recon.as_slice().iter().all(|&v| v == 0.0));
        // every reconstruction sits at the origin, so E is the mean center norm
        let e = ev.report.e_metric.unwrap();
        assert!((e - 3.748_728_525_478_037).abs() < 1e-9, "{e}");
        assert_eq!(ev.pca.projection.rows(), 5000);
        let csv = recon_csv(&ev, &ds).unwrap();
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 8);
        assert_eq!(csv.lines().count(), 5001);
    }

    #[test]
    fn report_is_deterministic() {
        let ds = gen_gmm(3);
        let cfg = TrainConfig {
            codec: crate::codec::CodecSpec { hidden_dim: 16, ..crate::codec::CodecSpec::toy() },
            ..TrainConfig::toy(RegularizerKind::Parametric, 0.1)
        };
        let codec = Codec::init(cfg.codec, &mut RunRng::new(1));
        let opts = EvalOptions { probe_train: Some(&ds), sampled: false, seed: 5 };
        let a = evaluate(&codec, &ds, &cfg, &opts).unwrap();
        let b = evaluate(&codec, &ds, &cfg, &opts).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.pca.projection.cols(), 2);
        assert_eq!(embeddings_csv(&a, &ds.labels), embeddings_csv(&b, &ds.labels));
        assert!(a.report.probe_err.is_some());
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let ds = gen_gmm(3);
        let cfg = TrainConfig::mnist(RegularizerKind::Parametric, 0.1);
        let codec = Codec::zeros(crate::codec::CodecSpec { hidden_dim: 4, ..cfg.codec });
        assert!(matches!(evaluate(&codec, &ds, &cfg, &EvalOptions::default()), Err(Error::Contract(_))));
    }
}
