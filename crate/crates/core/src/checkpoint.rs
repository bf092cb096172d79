//! Versioned JSON checkpoints.
//!
//! ```json
//! {"format": "ipae-checkpoint", "version": 1, "seed": 0,
//!  "codec": {...}, "params": {"enc.h.W": {"shape": [2048, 2], "data": [...]}, ...}}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{Codec, CodecSpec, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const CHECKPOINT_FORMAT: &str = "ipae-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub codec: CodecSpec,
    pub params: BTreeMap<String, TensorRecord>,
}

impl Checkpoint {
    pub fn from_codec(codec: &Codec, seed: u64) -> Self {
        let params = TENSOR_NAMES
            .iter()
            .zip(codec.tensor_shapes())
            .zip(codec.tensors())
            .map(|((name, shape), data)| {
                (
                    (*name).to_string(),
                    TensorRecord {
                        shape,
                        data: data.to_vec(),
                    },
                )
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed,
            codec: codec.spec,
            params,
        }
    }

    pub fn to_codec(&self) -> Result<Codec> {
        let bad = |reason: String| Error::Format {
            what: "checkpoint".into(),
            reason,
        };
        if self.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("format `{}`, expected `{CHECKPOINT_FORMAT}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {}", self.version)));
        }
        self.codec.validate()?;
        let mut codec = Codec::zeros(self.codec);
        if let Some(extra) = self.params.keys().find(|k| !TENSOR_NAMES.contains(&k.as_str())) {
            return Err(bad(format!("unknown tensor `{extra}`")));
        }
        let shapes = codec.tensor_shapes();
        for ((name, shape), slot) in TENSOR_NAMES.iter().zip(shapes).zip(codec.tensors_mut()) {
            let rec = self.params.get(*name).ok_or_else(|| bad(format!("missing tensor `{name}`")))?;
            if rec.shape != shape || rec.data.len() != slot.len() {
                return Err(bad(format!(
                    "tensor `{name}` has shape {:?} with {} values, expected {shape:?}",
                    rec.shape,
                    rec.data.len()
                )));
            }
            if rec.data.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("tensor `{name}` holds non-finite values")));
            }
            slot.copy_from_slice(&rec.data);
        }
        Ok(codec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            what: "checkpoint".into(),
            source: e,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rng::RunRng;

    fn small() -> Codec {
        let spec = CodecSpec {
            input_dim: 3,
            hidden_dim: 4,
            latent_dim: 2,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        };
        Codec::init(spec, &mut RunRng::new(12))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let codec = small();
        let ck = Checkpoint::from_codec(&codec, 12);
        let text = ck.to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        let restored = back.to_codec().unwrap();
        assert!(restored
            .flat_params()
            .iter()
            .zip(codec.flat_params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.to_json(), text);
        assert!(text.contains("\"enc.logvar.W\""));
    }

    #[test]
    fn rejects_wrong_shapes_and_corruption() {
        let mut ck = Checkpoint::from_codec(&small(), 1);
        ck.params.get_mut("dec.out.b").unwrap().data.pop();
        assert!(matches!(ck.to_codec(), Err(Error::Format { .. })));
        assert!(matches!(Checkpoint::from_json("{\"format\": "), Err(Error::Json { .. })));
    }
}
