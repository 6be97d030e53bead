use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CHANNELS;

use super::model::{DetectorParams, HEAD_FIXED, HIDDEN};

const FORMAT: &str = "lidar-adv-detector";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format: String,
    version: u32,
    classes: usize,
    hidden: usize,
    seed: u64,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
    /// Lengths of the tensors packed into `weights`, in order.
    tensor_lengths: Vec<usize>,
    /// Little-endian f64 values, base64 encoded.
    weights: String,
    #[serde(default)]
    metadata: serde_json::Value,
}

impl DetectorParams {
    pub fn to_json(&self) -> String {
        let mut bytes = Vec::with_capacity(self.param_count() * 8);
        for t in self.tensors() {
            for v in t {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let file = WeightsFile {
            format: FORMAT.into(),
            version: VERSION,
            classes: self.classes,
            hidden: HIDDEN,
            seed: self.seed,
            input_shift: self.input_shift.to_vec(),
            input_scale: self.input_scale.to_vec(),
            tensor_lengths: self.tensors().iter().map(|t| t.len()).collect(),
            weights: STANDARD.encode(bytes),
            metadata: self.metadata.clone(),
        };
        serde_json::to_string_pretty(&file).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightsFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(Error::Parse(format!("not a detector weights file (format {:?})", file.format)));
        }
        if file.version != VERSION {
            return Err(Error::Parse(format!("unsupported weights version {}", file.version)));
        }
        if file.hidden != HIDDEN || file.classes == 0 {
            return Err(Error::Parse(format!(
                "architecture mismatch: hidden {} classes {} (expected hidden {HIDDEN}, head {HEAD_FIXED}+K)",
                file.hidden, file.classes
            )));
        }
        if file.input_shift.len() != CHANNELS || file.input_scale.len() != CHANNELS {
            return Err(Error::Parse("input normalization must have one entry per feature channel".into()));
        }
        let bytes = STANDARD
            .decode(file.weights.as_bytes())
            .map_err(|e| Error::Parse(format!("weights blob: {e}")))?;
        let mut params = DetectorParams::zeros(file.classes);
        let expected: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        if file.tensor_lengths != expected || bytes.len() != expected.iter().sum::<usize>() * 8 {
            return Err(Error::Parse("weights blob does not match the architecture".into()));
        }
        let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = values.next().expect("length checked");
            }
        }
        params.seed = file.seed;
        params.input_shift.copy_from_slice(&file.input_shift);
        params.input_scale.copy_from_slice(&file.input_scale);
        params.metadata = file.metadata;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
