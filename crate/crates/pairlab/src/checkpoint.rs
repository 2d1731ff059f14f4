//! Bit-exact parameter checkpoints.
//!
//! A checkpoint is a JSON document with a format-version field, the model
//! structure (dims, window, description texts), and one record per tensor
//! holding explicit dimensions plus the f64 payload as 16 hex digits per
//! value. Hex-encoded bit patterns round-trip exactly, and the fixed field
//! and tensor order makes serialization byte-deterministic.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{DescriptionTexts, Model, TENSOR_NAMES};
use crate::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    dim: usize,
    vocab_size: usize,
    mix_window: usize,
    pair_description: String,
    unpair_description: String,
    tensors: Vec<TensorRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    len: usize,
    data: String,
}

pub fn model_to_json(model: &Model) -> String {
    let tensors = model
        .tensors()
        .into_iter()
        .map(|(name, data)| TensorRecord {
            name: name.to_string(),
            len: data.len(),
            data: encode_hex(data),
        })
        .collect();
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        dim: model.encoder.dim,
        vocab_size: model.encoder.vocab_size,
        mix_window: model.encoder.mix_window,
        pair_description: model.descriptions.pair.clone(),
        unpair_description: model.descriptions.unpair.clone(),
        tensors,
    };
    let mut out = serde_json::to_string_pretty(&file).expect("checkpoint serializes");
    out.push('\n');
    out
}

pub fn model_from_json(json: &str) -> Result<Model> {
    let file: CheckpointFile =
        serde_json::from_str(json).map_err(|e| Error::BadCheckpoint(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::BadCheckpoint(format!(
            "unsupported format version {}",
            file.format_version
        )));
    }
    let texts = DescriptionTexts {
        pair: file.pair_description,
        unpair: file.unpair_description,
    };
    let mut model = Model::init(file.dim, file.vocab_size, file.mix_window, 1.0, texts, 0)?;
    if file.tensors.len() != TENSOR_NAMES.len() {
        return Err(Error::BadCheckpoint(format!(
            "expected {} tensors, found {}",
            TENSOR_NAMES.len(),
            file.tensors.len()
        )));
    }
    for (record, (name, param)) in file.tensors.iter().zip(model.tensors_mut()) {
        if record.name != name {
            return Err(Error::BadCheckpoint(format!(
                "tensor {:?} out of order (expected {name:?})",
                record.name
            )));
        }
        let values = decode_hex(&record.data)?;
        if values.len() != record.len || values.len() != param.len() {
            return Err(Error::BadCheckpoint(format!(
                "tensor {name}: payload holds {} values, header says {}, model needs {}",
                values.len(),
                record.len,
                param.len()
            )));
        }
        param.copy_from_slice(&values);
    }
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let json = fs::read_to_string(path)?;
    model_from_json(&json)
}

fn encode_hex(data: &[f64]) -> String {
    let mut out = String::with_capacity(data.len() * 16);
    for v in data {
        out.push_str(&format!("{:016x}", v.to_bits()));
    }
    out
}

fn decode_hex(data: &str) -> Result<Vec<f64>> {
    if data.len() % 16 != 0 {
        return Err(Error::BadCheckpoint(format!(
            "hex payload length {} is not a multiple of 16",
            data.len()
        )));
    }
    data.as_bytes()
        .chunks(16)
        .map(|chunk| {
            let s = std::str::from_utf8(chunk)
                .map_err(|_| Error::BadCheckpoint("non-ascii hex payload".into()))?;
            let bits = u64::from_str_radix(s, 16)
                .map_err(|e| Error::BadCheckpoint(format!("bad hex chunk {s:?}: {e}")))?;
            Ok(f64::from_bits(bits))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DescriptionTexts;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut model = Model::init(8, 64, 3, 0.07, DescriptionTexts::default(), 17).unwrap();
        // Values with awkward bit patterns survive.
        model.encoder.b_s[0] = f64::MIN_POSITIVE;
        model.encoder.temperature = 0.1 + 0.2; // not exactly 0.3
        let json = model_to_json(&model);
        let restored = model_from_json(&json).unwrap();
        assert_eq!(model, restored);
        // Serialization itself is deterministic.
        assert_eq!(json, model_to_json(&restored));
    }

    #[test]
    fn save_and_load_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let model = Model::init(4, 32, 1, 0.07, DescriptionTexts::default(), 3).unwrap();
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn rejects_corrupt_payloads() {
        let model = Model::init(4, 32, 1, 0.07, DescriptionTexts::default(), 3).unwrap();
        let json = model_to_json(&model);
        let truncated = json.replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(model_from_json(&truncated), Err(Error::BadCheckpoint(_))));
        assert!(matches!(model_from_json("{"), Err(Error::BadCheckpoint(_))));
    }
}
