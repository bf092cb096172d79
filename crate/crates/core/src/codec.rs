//! Gaussian stochastic encoder, decoder and the reparameterized sampler.
//!
//! The encoder is one hidden layer followed by two linear heads, one for the
//! mean and one for the log-variance. The standard deviation is
//! `exp(logvar / 2)` clamped to `[SIGMA_FLOOR, SIGMA_CEIL]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{Activation, DenseGrads, DenseLayer};
use crate::rng::RunRng;

pub const SIGMA_FLOOR: f64 = 1e-4;
pub const SIGMA_CEIL: f64 = 1e3;

/// Network shape shared by encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl CodecSpec {
    /// 2 → relu 2048 → (μ, σ) ∈ ℝ¹⁶ → relu 2048 → 2.
    pub fn toy() -> Self {
        Self {
            input_dim: 2,
            hidden_dim: 2048,
            latent_dim: 16,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }

    /// 784 → sigmoid 1024 → (μ, σ) ∈ ℝ⁸ → sigmoid 1024 → sigmoid 784.
    pub fn mnist() -> Self {
        Self {
            input_dim: 784,
            hidden_dim: 1024,
            latent_dim: 8,
            hidden_activation: Activation::Sigmoid,
            output_activation: Activation::Sigmoid,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "toy" => Some(Self::toy()),
            "mnist" => Some(Self::mnist()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("codec.input_dim", self.input_dim),
            ("codec.hidden_dim", self.hidden_dim),
            ("codec.latent_dim", self.latent_dim),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.hidden_activation == Activation::Identity {
            return Err(Error::config("codec.hidden_activation", "must be relu or sigmoid"));
        }
        if self.output_activation == Activation::Relu {
            return Err(Error::config("codec.output_activation", "must be identity or sigmoid"));
        }
        Ok(())
    }
}

/// Per-sample posterior `N(mu, diag(sigma²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCode {
    pub mu: Matrix,
    pub sigma: Matrix,
}

impl GaussianCode {
    pub fn new(mu: Matrix, sigma: Matrix) -> Result<Self> {
        let code = Self { mu, sigma };
        code.validate()?;
        Ok(code)
    }

    pub fn batch(&self) -> usize {
        self.mu.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.shape() != self.sigma.shape() {
            return Err(Error::shape("GaussianCode", format!("sigma {:?}", self.mu.shape()), format!("{:?}", self.sigma.shape())));
        }
        if !self.mu.is_finite() {
            return Err(Error::Numeric {
                context: "GaussianCode.mu".into(),
            });
        }
        // a hair of slack so values produced by the clamp always pass
        if let Some(s) = self
            .sigma
            .as_slice()
            .iter()
            .find(|s| !s.is_finite() || **s < SIGMA_FLOOR * (1.0 - 1e-12))
        {
            return Err(Error::Numeric {
                context: format!("GaussianCode.sigma entry {s} outside [{SIGMA_FLOOR}, inf)"),
            });
        }
        Ok(())
    }
}

/// Standard-normal draws laid out as `(batch * k) × latent_dim`; row
/// `i * k + s` is draw `s` for sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    pub k: usize,
    pub eps: Matrix,
}

impl NoiseBlock {
    pub fn sample(batch: usize, k: usize, latent_dim: usize, rng: &mut RunRng) -> Self {
        let mut eps = Matrix::zeros(batch * k, latent_dim);
        rng.fill_normal(eps.as_mut_slice());
        Self { k, eps }
    }

    pub fn zeros(batch: usize, k: usize, latent_dim: usize) -> Self {
        Self {
            k,
            eps: Matrix::zeros(batch * k, latent_dim),
        }
    }

    pub fn from_matrix(k: usize, eps: Matrix) -> Result<Self> {
        if k == 0 || !eps.rows().is_multiple_of(k) {
            return Err(Error::shape("NoiseBlock", format!("rows divisible by k={k}"), eps.rows()));
        }
        Ok(Self { k, eps })
    }

    pub fn batch(&self) -> usize {
        self.eps.rows() / self.k
    }

    #[inline]
    pub fn draw(&self, i: usize, s: usize) -> &[f64] {
        self.eps.row(i * self.k + s)
    }

    fn check(&self, code: &GaussianCode) -> Result<()> {
        if self.k == 0 || self.eps.rows() != code.batch() * self.k || self.eps.cols() != code.latent_dim() {
            return Err(Error::shape(
                "NoiseBlock",
                format!("{}x{} (batch {} * k {})", code.batch() * self.k.max(1), code.latent_dim(), code.batch(), self.k),
                format!("{:?}", self.eps.shape()),
            ));
        }
        Ok(())
    }
}

/// `z[i, s] = mu_i + sigma_i ⊙ eps[i, s]`.
pub fn reparameterize(code: &GaussianCode, noise: &NoiseBlock) -> Result<Matrix> {
    noise.check(code)?;
    let mut z = Matrix::zeros(noise.eps.rows(), code.latent_dim());
    for i in 0..code.batch() {
        let (mu, sigma) = (code.mu.row(i), code.sigma.row(i));
        for s in 0..noise.k {
            let r = i * noise.k + s;
            let eps = noise.eps.row(r);
            for (d, zv) in z.row_mut(r).iter_mut().enumerate() {
                *zv = mu[d] + sigma[d] * eps[d];
            }
        }
    }
    Ok(z)
}

/// Intermediate values of an encoder pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    pub hidden: Matrix,
    pub logvar: Matrix,
    pub code: GaussianCode,
}

#[derive(Debug, Clone)]
pub struct DecoderTrace {
    pub hidden: Matrix,
    pub output: Matrix,
}

/// Encoder and decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Codec {
    pub spec: CodecSpec,
    pub enc_hidden: DenseLayer,
    pub enc_mu: DenseLayer,
    pub enc_logvar: DenseLayer,
    pub dec_hidden: DenseLayer,
    pub dec_out: DenseLayer,
}

/// Gradients for every tensor of a [`Codec`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodecGrads {
    pub enc_hidden: DenseGrads,
    pub enc_mu: DenseGrads,
    pub enc_logvar: DenseGrads,
    pub dec_hidden: DenseGrads,
    pub dec_out: DenseGrads,
}

/// Checkpoint names of the parameter tensors, in [`Codec::tensors`] order.
pub const TENSOR_NAMES: [&str; 10] = [
    "enc.h.W",
    "enc.h.b",
    "enc.mu.W",
    "enc.mu.b",
    "enc.logvar.W",
    "enc.logvar.b",
    "dec.h.W",
    "dec.h.b",
    "dec.out.W",
    "dec.out.b",
];

impl Codec {
    pub fn zeros(spec: CodecSpec) -> Self {
        let CodecSpec {
            input_dim,
            hidden_dim,
            latent_dim,
            hidden_activation,
            output_activation,
        } = spec;
        Self {
            spec,
            enc_hidden: DenseLayer::zeros(input_dim, hidden_dim, hidden_activation),
            enc_mu: DenseLayer::zeros(hidden_dim, latent_dim, Activation::Identity),
            enc_logvar: DenseLayer::zeros(hidden_dim, latent_dim, Activation::Identity),
            dec_hidden: DenseLayer::zeros(latent_dim, hidden_dim, hidden_activation),
            dec_out: DenseLayer::zeros(hidden_dim, input_dim, output_activation),
        }
    }

    /// Glorot-uniform init, layers drawn in [`TENSOR_NAMES`] order.
    pub fn init(spec: CodecSpec, rng: &mut RunRng) -> Self {
        let CodecSpec {
            input_dim,
            hidden_dim,
            latent_dim,
            hidden_activation,
            output_activation,
        } = spec;
        Self {
            spec,
            enc_hidden: DenseLayer::glorot(input_dim, hidden_dim, hidden_activation, rng),
            enc_mu: DenseLayer::glorot(hidden_dim, latent_dim, Activation::Identity, rng),
            enc_logvar: DenseLayer::glorot(hidden_dim, latent_dim, Activation::Identity, rng),
            dec_hidden: DenseLayer::glorot(latent_dim, hidden_dim, hidden_activation, rng),
            dec_out: DenseLayer::glorot(hidden_dim, input_dim, output_activation, rng),
        }
    }

    fn layers(&self) -> [&DenseLayer; 5] {
        [&self.enc_hidden, &self.enc_mu, &self.enc_logvar, &self.dec_hidden, &self.dec_out]
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .into_iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        [
            &mut self.enc_hidden,
            &mut self.enc_mu,
            &mut self.enc_logvar,
            &mut self.dec_hidden,
            &mut self.dec_out,
        ]
        .into_iter()
        .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
        .collect()
    }

    /// Shapes in [`TENSOR_NAMES`] order; biases are one-dimensional.
    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        self.layers()
            .into_iter()
            .flat_map(|l| [vec![l.weight.rows(), l.weight.cols()], vec![l.bias.len()]])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters concatenated in [`TENSOR_NAMES`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("Codec::set_flat_params", self.num_params(), flat.len()));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn encode_traced(&self, x: &Matrix) -> Result<EncoderTrace> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::shape("encode", format!("{} input columns", self.spec.input_dim), x.cols()));
        }
        let hidden = finite(self.enc_hidden.forward(x)?, "encoder hidden layer")?;
        let mu = finite(self.enc_mu.forward(&hidden)?, "encoder mu head")?;
        let logvar = finite(self.enc_logvar.forward(&hidden)?, "encoder logvar head")?;
        let sigma = logvar.map(sigma_from_logvar);
        Ok(EncoderTrace {
            hidden,
            logvar,
            code: GaussianCode { mu, sigma },
        })
    }

    pub fn encode(&self, x: &Matrix) -> Result<GaussianCode> {
        Ok(self.encode_traced(x)?.code)
    }

    pub fn decode_traced(&self, z: &Matrix) -> Result<DecoderTrace> {
        if z.cols() != self.spec.latent_dim {
            return Err(Error::shape("decode", format!("{} latent columns", self.spec.latent_dim), z.cols()));
        }
        let hidden = finite(self.dec_hidden.forward(z)?, "decoder hidden layer")?;
        let output = finite(self.dec_out.forward(&hidden)?, "decoder output layer")?;
        Ok(DecoderTrace { hidden, output })
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        Ok(self.decode_traced(z)?.output)
    }
}

impl CodecGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        [&self.enc_hidden, &self.enc_mu, &self.enc_logvar, &self.dec_hidden, &self.dec_out]
            .into_iter()
            .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[inline]
pub fn sigma_from_logvar(logvar: f64) -> f64 {
    (0.5 * logvar).exp().clamp(SIGMA_FLOOR, SIGMA_CEIL)
}

/// Whether `d sigma / d logvar` is live, i.e. the clamp is not active.
#[inline]
pub fn sigma_unclamped(logvar: f64) -> bool {
    let s = (0.5 * logvar).exp();
    s > SIGMA_FLOOR && s < SIGMA_CEIL
}

fn finite(m: Matrix, layer: &str) -> Result<Matrix> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::Numeric {
            context: format!("activations of {layer}"),
        })
    }
}
