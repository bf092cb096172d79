//! Mutual-information bounds, distortions and the combined training loss.
//!
//! Two regularizers are available:
//!
//! - the parametric bound, which is the batch-mean KL divergence from each
//!   posterior `N(mu_i, diag sigma_i²)` to `N(0, I)` (the β-VAE term);
//! - the information-potential bound, a mean of pairwise squared
//!   Mahalanobis-style distances
//!   `(mu_j - mu_i - sigma_i ⊙ eps_ik)² ⊘ sigma_j²`, which pulls pairs of
//!   encoded samples together.
//!
//! The information-potential bound equals the non-parametric entropy bound
//! minus the conditional entropy term exactly, because the `log|2π σ_j²|`
//! terms cancel. The conditional entropy term drops the `d/2` constant of the
//! true Gaussian entropy, so an input-independent encoder scores `d/2`, not 0.
//!
//! All sums run over the current minibatch, with `N` the batch size.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::codec::{reparameterize, sigma_unclamped, Codec, CodecGrads, GaussianCode, NoiseBlock};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RunRng;

/// Clamp applied to reconstructions before taking logs.
pub const BERNOULLI_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    None,
    /// β-VAE style KL to a standard normal.
    Parametric,
    /// Pairwise information-potential bound.
    InformationPotential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    pub beta: f64,
    /// Noise draws per sample and step.
    pub k: usize,
    /// Partners per anchor for the information-potential bound.
    pub nj: usize,
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config("reg.beta", format!("must be finite and >= 0, got {}", self.beta)));
        }
        if self.k == 0 {
            return Err(Error::config("reg.k", "must be >= 1"));
        }
        if self.nj == 0 {
            return Err(Error::config("reg.nj", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distortion {
    /// Squared Euclidean distance per sample.
    Mse,
    /// Bernoulli negative log-likelihood per sample.
    Bernoulli,
}

/// Partner indices `j` for each anchor `i`, `per_anchor` of them, stored
/// anchor-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partners {
    per_anchor: usize,
    idx: Vec<usize>,
}

impl Partners {
    pub fn new(per_anchor: usize, idx: Vec<usize>) -> Result<Self> {
        if per_anchor == 0 || idx.is_empty() {
            return Err(Error::Contract("partner index set is empty".into()));
        }
        if !idx.len().is_multiple_of(per_anchor) {
            return Err(Error::shape("Partners", format!("multiple of {per_anchor}"), idx.len()));
        }
        Ok(Self { per_anchor, idx })
    }

    /// Every `j` for every anchor, including `j = i`.
    pub fn all_pairs(n: usize) -> Self {
        Self {
            per_anchor: n,
            idx: (0..n).flat_map(|_| 0..n).collect(),
        }
    }

    /// `nj` partners per anchor, none equal to the anchor.
    ///
    /// The rows are placed on a random cycle and each anchor takes the `nj`
    /// rows that follow it. Every partner is marginally uniform over the
    /// other rows, the partners of one anchor are distinct, and every row
    /// serves as a partner exactly `nj` times, so the log-determinant terms
    /// of the entropy bound cancel exactly against the conditional entropy.
    /// `nj` is capped at `n - 1`; a batch of one row pairs the row with
    /// itself.
    pub fn sample(n: usize, nj: usize, rng: &mut RunRng) -> Result<Self> {
        if n == 0 || nj == 0 {
            return Err(Error::Contract("partner index set is empty".into()));
        }
        if n == 1 {
            return Ok(Self { per_anchor: 1, idx: vec![0] });
        }
        let nj = nj.min(n - 1);
        let mut cycle: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut cycle);
        let mut pos = vec![0; n];
        for (p, &row) in cycle.iter().enumerate() {
            pos[row] = p;
        }
        let idx = (0..n)
            .flat_map(|i| (1..=nj).map(|s| cycle[(pos[i] + s) % n]).collect::<Vec<_>>())
            .collect();
        Ok(Self { per_anchor: nj, idx })
    }

    pub fn per_anchor(&self) -> usize {
        self.per_anchor
    }

    pub fn anchors(&self) -> usize {
        self.idx.len() / self.per_anchor
    }

    #[inline]
    pub fn of(&self, i: usize) -> &[usize] {
        &self.idx[i * self.per_anchor..(i + 1) * self.per_anchor]
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.anchors() != n {
            return Err(Error::shape("Partners", format!("{n} anchors"), self.anchors()));
        }
        if let Some(&j) = self.idx.iter().find(|&&j| j >= n) {
            return Err(Error::Contract(format!("partner index {j} out of range for batch {n}")));
        }
        Ok(())
    }
}

/// Components of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub distortion: f64,
    /// The active regularizer before scaling by β; 0 when there is none.
    pub mi_bound: f64,
    /// Entropy bound of the code marginal: the non-parametric bound for the
    /// information-potential regularizer, the cross-entropy against
    /// `N(0, I)` otherwise.
    pub h_z_bound: f64,
    pub h_z_given_x: f64,
}

/// Batch-mean `KL(N(mu, diag sigma²) || N(0, I))`.
pub fn parametric_mi_bound(code: &GaussianCode) -> Result<f64> {
    code.validate()?;
    let n = code.batch();
    if n == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for (&m, &s) in code.mu.row(i).iter().zip(code.sigma.row(i)) {
            let var = s * s;
            row += m * m + var - var.ln() - 1.0;
        }
        acc += row;
    }
    Ok(acc / (2.0 * n as f64))
}

/// Cross-entropy `E[-log N(z; 0, I)]` under the batch posteriors.
fn gaussian_cross_entropy(code: &GaussianCode) -> f64 {
    let n = code.batch() as f64;
    let d = code.latent_dim() as f64;
    let mut acc = 0.0;
    for i in 0..code.batch() {
        for (&m, &s) in code.mu.row(i).iter().zip(code.sigma.row(i)) {
            acc += m * m + s * s;
        }
    }
    (acc + n * d * TAU.ln()) / (2.0 * n)
}

/// `(1/2N) Σ_i log|2π diag(sigma_i²)|`.
pub fn conditional_entropy(code: &GaussianCode) -> f64 {
    let n = code.batch();
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        for &s in code.sigma.row(i) {
            acc += (TAU * s * s).ln();
        }
    }
    acc / (2.0 * n as f64)
}

fn check_pairwise(code: &GaussianCode, noise: &NoiseBlock, partners: &Partners) -> Result<()> {
    code.validate()?;
    if code.batch() == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    reparameterize_shape_ok(code, noise)?;
    partners.check(code.batch())
}

fn reparameterize_shape_ok(code: &GaussianCode, noise: &NoiseBlock) -> Result<()> {
    if noise.k == 0 || noise.eps.shape() != (code.batch() * noise.k, code.latent_dim()) {
        return Err(Error::shape(
            "noise block",
            format!("{}x{}", code.batch() * noise.k.max(1), code.latent_dim()),
            format!("{:?}", noise.eps.shape()),
        ));
    }
    Ok(())
}

/// Sums the pairwise squared-distance term and, when `with_logdet`, the
/// `log|2π σ_j²|` term over all (i, k, j) triples, then normalizes.
fn pairwise_sum(code: &GaussianCode, noise: &NoiseBlock, partners: &Partners, with_logdet: bool) -> f64 {
    let n = code.batch();
    let k = noise.k;
    let nj = partners.per_anchor();
    // log|2π σ_j²| per row, computed once
    let logdet: Vec<f64> = if with_logdet {
        (0..n)
            .map(|j| code.sigma.row(j).iter().map(|&s| (TAU * s * s).ln()).sum())
            .collect()
    } else {
        Vec::new()
    };
    let mut acc = 0.0;
    for i in 0..n {
        let (mu_i, sigma_i) = (code.mu.row(i), code.sigma.row(i));
        for s in 0..k {
            let eps = noise.draw(i, s);
            for &j in partners.of(i) {
                let (mu_j, sigma_j) = (code.mu.row(j), code.sigma.row(j));
                let mut term = 0.0;
                for d in 0..mu_i.len() {
                    let r = mu_j[d] - mu_i[d] - sigma_i[d] * eps[d];
                    term += r * r / (sigma_j[d] * sigma_j[d]);
                }
                if with_logdet {
                    term += logdet[j];
                }
                acc += term;
            }
        }
    }
    acc / (2.0 * (k * n * nj) as f64)
}

/// Non-parametric upper bound on `H(z)` over the given partner pairs.
pub fn nonparametric_entropy_bound(code: &GaussianCode, noise: &NoiseBlock, partners: &Partners) -> Result<f64> {
    check_pairwise(code, noise, partners)?;
    Ok(pairwise_sum(code, noise, partners, true))
}

/// Information-potential upper bound on `I(x; z)`.
pub fn ip_mi_bound(code: &GaussianCode, noise: &NoiseBlock, partners: &Partners) -> Result<f64> {
    check_pairwise(code, noise, partners)?;
    Ok(pairwise_sum(code, noise, partners, false))
}

fn check_same_shape(op: &'static str, x: &Matrix, recon: &Matrix) -> Result<()> {
    if x.shape() != recon.shape() {
        return Err(Error::shape(op, format!("{:?}", x.shape()), format!("{:?}", recon.shape())));
    }
    if x.rows() == 0 {
        return Err(Error::Contract(format!("{op}: empty batch")));
    }
    Ok(())
}

/// Squared Euclidean distance per sample, averaged over the batch.
pub fn mse_distortion(x: &Matrix, recon: &Matrix) -> Result<f64> {
    check_same_shape("mse_distortion", x, recon)?;
    let sum: f64 = x
        .as_slice()
        .iter()
        .zip(recon.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.rows() as f64)
}

fn check_unit_interval(x: &Matrix) -> Result<()> {
    if let Some(v) = x.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("Bernoulli targets must lie in [0, 1], found {v}")));
    }
    Ok(())
}

#[inline]
fn bernoulli_term(x: f64, p: f64) -> f64 {
    let p = p.clamp(BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP);
    -(x * p.ln() + (1.0 - x) * (1.0 - p).ln())
}

/// Bernoulli negative log-likelihood per sample, averaged over the batch.
/// Reconstructions are clamped to `[1e-7, 1 - 1e-7]`.
pub fn bernoulli_distortion(x: &Matrix, recon: &Matrix) -> Result<f64> {
    check_same_shape("bernoulli_distortion", x, recon)?;
    check_unit_interval(x)?;
    let sum: f64 = x
        .as_slice()
        .iter()
        .zip(recon.as_slice())
        .map(|(&a, &p)| bernoulli_term(a, p))
        .sum();
    Ok(sum / x.rows() as f64)
}

/// Sum of per-(i, k) distortions between `x_i` and reconstruction row
/// `i * k + s`, plus the gradient w.r.t. the reconstructions when requested.
/// Both are divided by `N * K`.
fn distortion_with_grad(
    kind: Distortion,
    x: &Matrix,
    recon: &Matrix,
    k: usize,
    want_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    let n = x.rows();
    if recon.shape() != (n * k, x.cols()) {
        return Err(Error::shape(
            "distortion",
            format!("{}x{}", n * k, x.cols()),
            format!("{:?}", recon.shape()),
        ));
    }
    if kind == Distortion::Bernoulli {
        check_unit_interval(x)?;
    }
    let scale = 1.0 / (n * k) as f64;
    let mut grad = want_grad.then(|| Matrix::zeros(recon.rows(), recon.cols()));
    let mut acc = 0.0;
    for i in 0..n {
        let xi = x.row(i);
        for s in 0..k {
            let r = i * k + s;
            let ri = recon.row(r);
            let mut row = 0.0;
            match kind {
                Distortion::Mse => {
                    for (&a, &b) in xi.iter().zip(ri) {
                        row += (b - a) * (b - a);
                    }
                    if let Some(g) = grad.as_mut() {
                        for ((gv, &a), &b) in g.row_mut(r).iter_mut().zip(xi).zip(ri) {
                            *gv = 2.0 * (b - a) * scale;
                        }
                    }
                }
                Distortion::Bernoulli => {
                    for (&a, &p) in xi.iter().zip(ri) {
                        row += bernoulli_term(a, p);
                    }
                    if let Some(g) = grad.as_mut() {
                        for ((gv, &a), &p) in g.row_mut(r).iter_mut().zip(xi).zip(ri) {
                            *gv = if p > BERNOULLI_CLAMP && p < 1.0 - BERNOULLI_CLAMP {
                                (-a / p + (1.0 - a) / (1.0 - p)) * scale
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
            acc += row;
        }
    }
    Ok((acc * scale, grad))
}

/// Adds `beta * d(ip_mi_bound)/d(mu, sigma)` into `d_mu` and `d_sigma`.
fn ip_backward(
    code: &GaussianCode,
    noise: &NoiseBlock,
    partners: &Partners,
    beta: f64,
    d_mu: &mut Matrix,
    d_sigma: &mut Matrix,
) {
    let n = code.batch();
    let k = noise.k;
    let c = beta / (2.0 * (k * n * partners.per_anchor()) as f64);
    let dims = code.latent_dim();
    for i in 0..n {
        for s in 0..k {
            let eps = noise.draw(i, s);
            for &j in partners.of(i) {
                for d in 0..dims {
                    let (mu_i, sig_i) = (code.mu[(i, d)], code.sigma[(i, d)]);
                    let (mu_j, sig_j) = (code.mu[(j, d)], code.sigma[(j, d)]);
                    let inv_var = 1.0 / (sig_j * sig_j);
                    let r = mu_j - mu_i - sig_i * eps[d];
                    let g = 2.0 * c * r * inv_var;
                    d_mu[(j, d)] += g;
                    d_mu[(i, d)] -= g;
                    d_sigma[(i, d)] -= g * eps[d];
                    d_sigma[(j, d)] -= 2.0 * c * r * r * inv_var / sig_j;
                }
            }
        }
    }
}

/// Adds `beta * d(parametric_mi_bound)/d(mu, sigma)`.
fn parametric_backward(code: &GaussianCode, beta: f64, d_mu: &mut Matrix, d_sigma: &mut Matrix) {
    let scale = beta / code.batch() as f64;
    for ((dm, &m), (ds, &s)) in d_mu
        .as_mut_slice()
        .iter_mut()
        .zip(code.mu.as_slice())
        .zip(d_sigma.as_mut_slice().iter_mut().zip(code.sigma.as_slice()))
    {
        *dm += scale * m;
        *ds += scale * (s - 1.0 / s);
    }
}

/// Inputs of one loss evaluation with all randomness frozen.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub x: &'a Matrix,
    pub reg: &'a Regularizer,
    pub distortion: Distortion,
    pub noise: &'a NoiseBlock,
    /// Required for the information-potential regularizer, ignored otherwise.
    pub partners: Option<&'a Partners>,
}

fn breakdown(
    code: &GaussianCode,
    inputs: &LossInputs<'_>,
    distortion: f64,
) -> Result<LossBreakdown> {
    let h_z_given_x = conditional_entropy(code);
    let (mi_bound, h_z_bound) = match inputs.reg.kind {
        RegularizerKind::InformationPotential => {
            let partners = inputs
                .partners
                .ok_or_else(|| Error::Contract("information-potential loss needs partner indices".into()))?;
            check_pairwise(code, inputs.noise, partners)?;
            let mi = pairwise_sum(code, inputs.noise, partners, false);
            (mi, pairwise_sum(code, inputs.noise, partners, true))
        }
        RegularizerKind::Parametric => (parametric_mi_bound(code)?, gaussian_cross_entropy(code)),
        RegularizerKind::None => (0.0, gaussian_cross_entropy(code)),
    };
    Ok(LossBreakdown {
        total: distortion + inputs.reg.beta * mi_bound,
        distortion,
        mi_bound,
        h_z_bound,
        h_z_given_x,
    })
}

fn check_inputs(codec: &Codec, inputs: &LossInputs<'_>) -> Result<()> {
    if inputs.x.rows() == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    if inputs.noise.k != inputs.reg.k {
        return Err(Error::shape("total_loss noise draws", inputs.reg.k, inputs.noise.k));
    }
    if inputs.noise.eps.shape() != (inputs.x.rows() * inputs.reg.k, codec.spec.latent_dim) {
        return Err(Error::shape(
            "total_loss noise",
            format!("{}x{}", inputs.x.rows() * inputs.reg.k, codec.spec.latent_dim),
            format!("{:?}", inputs.noise.eps.shape()),
        ));
    }
    Ok(())
}

/// `distortion(x, decode(reparameterize(encode(x)))) + beta * bound`, with
/// the same noise draws feeding both parts.
pub fn total_loss(codec: &Codec, inputs: &LossInputs<'_>) -> Result<LossBreakdown> {
    check_inputs(codec, inputs)?;
    let code = codec.encode(inputs.x)?;
    let z = reparameterize(&code, inputs.noise)?;
    let recon = codec.decode(&z)?;
    let (distortion, _) = distortion_with_grad(inputs.distortion, inputs.x, &recon, inputs.noise.k, false)?;
    breakdown(&code, inputs, distortion)
}

/// [`total_loss`] together with its exact gradient w.r.t. every parameter.
pub fn loss_and_grads(codec: &Codec, inputs: &LossInputs<'_>) -> Result<(LossBreakdown, CodecGrads)> {
    let (loss, grads, _) = loss_grads_code(codec, inputs)?;
    Ok((loss, grads))
}

/// As [`loss_and_grads`], also handing back the batch posteriors.
pub(crate) fn loss_grads_code(
    codec: &Codec,
    inputs: &LossInputs<'_>,
) -> Result<(LossBreakdown, CodecGrads, GaussianCode)> {
    check_inputs(codec, inputs)?;
    let enc = codec.encode_traced(inputs.x)?;
    let code = &enc.code;
    let z = reparameterize(code, inputs.noise)?;
    let dec = codec.decode_traced(&z)?;
    let (distortion, d_out) =
        distortion_with_grad(inputs.distortion, inputs.x, &dec.output, inputs.noise.k, true)?;
    let loss = breakdown(code, inputs, distortion)?;
    let d_out = d_out.expect("gradient requested");

    let (g_dec_out, d_dec_hidden) = codec.dec_out.backward(&dec.hidden, &dec.output, &d_out, true)?;
    let (g_dec_hidden, d_z) = codec
        .dec_hidden
        .backward(&z, &dec.hidden, &d_dec_hidden.expect("input grad"), true)?;
    let d_z = d_z.expect("input grad");

    let (n, dims, k) = (code.batch(), code.latent_dim(), inputs.noise.k);
    let mut d_mu = Matrix::zeros(n, dims);
    let mut d_sigma = Matrix::zeros(n, dims);
    for i in 0..n {
        for s in 0..k {
            let r = i * k + s;
            let eps = inputs.noise.eps.row(r);
            for d in 0..dims {
                let g = d_z[(r, d)];
                d_mu[(i, d)] += g;
                d_sigma[(i, d)] += g * eps[d];
            }
        }
    }

    let beta = inputs.reg.beta;
    match inputs.reg.kind {
        RegularizerKind::InformationPotential => {
            let partners = inputs.partners.expect("checked in breakdown");
            ip_backward(code, inputs.noise, partners, beta, &mut d_mu, &mut d_sigma);
        }
        RegularizerKind::Parametric => parametric_backward(code, beta, &mut d_mu, &mut d_sigma),
        RegularizerKind::None => {}
    }

    // sigma = exp(logvar / 2) inside the clamp range
    let mut d_logvar = d_sigma;
    for ((g, &lv), &s) in d_logvar
        .as_mut_slice()
        .iter_mut()
        .zip(enc.logvar.as_slice())
        .zip(code.sigma.as_slice())
    {
        *g = if sigma_unclamped(lv) { *g * 0.5 * s } else { 0.0 };
    }

    let (g_enc_mu, d_h1) = codec.enc_mu.backward(&enc.hidden, &code.mu, &d_mu, true)?;
    let (g_enc_logvar, d_h2) = codec.enc_logvar.backward(&enc.hidden, &enc.logvar, &d_logvar, true)?;
    let mut d_hidden = d_h1.expect("input grad");
    for (a, b) in d_hidden
        .as_mut_slice()
        .iter_mut()
        .zip(d_h2.expect("input grad").as_slice())
    {
        *a += b;
    }
    let (g_enc_hidden, _) = codec.enc_hidden.backward(inputs.x, &enc.hidden, &d_hidden, false)?;

    let grads = CodecGrads {
        enc_hidden: g_enc_hidden,
        enc_mu: g_enc_mu,
        enc_logvar: g_enc_logvar,
        dec_hidden: g_dec_hidden,
        dec_out: g_dec_out,
    };
    Ok((loss, grads, enc.code))
}
