//! Experiment configuration.
//!
//! Config files are JSON objects with exactly the [`TrainConfig`] fields;
//! unknown keys are rejected. `codec` may be a preset name (`"toy"`,
//! `"mnist"`) or a full [`CodecSpec`] object.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::codec::CodecSpec;
use crate::error::{Error, Result};
use crate::objectives::{Distortion, Regularizer, RegularizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(deserialize_with = "codec_or_preset")]
    pub codec: CodecSpec,
    pub reg: Regularizer,
    pub distortion: Distortion,
    pub lr: f64,
    pub batch_size: usize,
    pub total_batches: usize,
    pub seed: u64,
    pub log_every: usize,
}

fn codec_or_preset<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<CodecSpec, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Field {
        Preset(String),
        Spec(CodecSpec),
    }
    match Field::deserialize(de)? {
        Field::Spec(spec) => Ok(spec),
        Field::Preset(name) => CodecSpec::preset(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown codec preset `{name}` (expected toy or mnist)"))),
    }
}

impl TrainConfig {
    /// Toy mixture protocol: lr 0.001, batch 512, 5000 batches, K = 1,
    /// one partner per anchor, squared-error distortion.
    pub fn toy(kind: RegularizerKind, beta: f64) -> Self {
        Self {
            codec: CodecSpec::toy(),
            reg: Regularizer { kind, beta, k: 1, nj: 1 },
            distortion: Distortion::Mse,
            lr: 1e-3,
            batch_size: 512,
            total_batches: 5000,
            seed: 0,
            log_every: 100,
        }
    }

    /// Same schedule as [`TrainConfig::toy`] with the MNIST codec and
    /// Bernoulli distortion.
    pub fn mnist(kind: RegularizerKind, beta: f64) -> Self {
        Self {
            codec: CodecSpec::mnist(),
            distortion: Distortion::Bernoulli,
            ..Self::toy(kind, beta)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        self.reg.validate()?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("lr", format!("must be finite and > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.total_batches == 0 {
            return Err(Error::config("total_batches", "must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be >= 1"));
        }
        if self.reg.kind == RegularizerKind::InformationPotential {
            if self.batch_size < 2 {
                return Err(Error::config("batch_size", "must be >= 2 for the information-potential regularizer"));
            }
            if self.reg.nj > self.batch_size - 1 {
                return Err(Error::config(
                    "reg.nj",
                    format!("at most batch_size - 1 = {} partners per anchor", self.batch_size - 1),
                ));
            }
        }
        if self.distortion == Distortion::Bernoulli && self.codec.output_activation != crate::nn::Activation::Sigmoid {
            return Err(Error::config("distortion", "bernoulli needs a sigmoid output activation"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: TrainConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
