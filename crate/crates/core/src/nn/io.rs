//! Versioned model container.
//!
//! Layout: magic `GPVD`, `u32` format, `u32` length-prefixed JSON header,
//! then named tensor records (`u16` name length, name bytes, `u8` rank,
//! `u32` extents, `f32` little-endian payload). Values are stored as `f32`;
//! in-memory parameters live on the `f32` grid, so the round-trip is
//! byte-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::crnn::{CrnnConfig, CrnnModel, ModelMeta};
use crate::nn::Tensor;

const MAGIC: &[u8; 4] = b"GPVD";
const FORMAT: u32 = 1;

/// JSON header of a model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelHeader {
    pub config: CrnnConfig,
    pub meta: ModelMeta,
    /// Present only in training checkpoints.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trainer: Option<serde_json::Value>,
}

pub fn encode_container(json: &str, records: &[(String, &Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    for (name, tensor) in records {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(tensor.shape().len() as u8);
        for &extent in tensor.shape() {
            out.extend_from_slice(&(extent as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_container(bytes: &[u8], origin: &str) -> Result<(String, Vec<(String, Tensor)>)> {
    let fail = |reason: &str| Error::format(origin, reason);
    if bytes.len() < 12 || &bytes[0..4] != MAGIC {
        return Err(fail("missing GPVD magic"));
    }
    let format = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if format != FORMAT {
        return Err(fail(&format!("unsupported format {format}")));
    }
    let json_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if 12 + json_len > bytes.len() {
        return Err(fail("truncated header"));
    }
    let json = std::str::from_utf8(&bytes[12..12 + json_len])
        .map_err(|_| fail("header is not UTF-8"))?
        .to_owned();
    let mut pos = 12 + json_len;
    let mut records = Vec::new();
    while pos < bytes.len() {
        if pos + 2 > bytes.len() {
            return Err(fail("truncated record name length"));
        }
        let name_len = u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
        pos += 2;
        if pos + name_len + 1 > bytes.len() {
            return Err(fail("truncated record name"));
        }
        let name = std::str::from_utf8(&bytes[pos..pos + name_len])
            .map_err(|_| fail("record name is not UTF-8"))?
            .to_owned();
        pos += name_len;
        let rank = bytes[pos] as usize;
        pos += 1;
        if pos + rank * 4 > bytes.len() {
            return Err(fail("truncated extents"));
        }
        let mut shape = Vec::with_capacity(rank);
        for r in 0..rank {
            shape.push(u32::from_le_bytes(bytes[pos + r * 4..pos + r * 4 + 4].try_into().unwrap()) as usize);
        }
        pos += rank * 4;
        let numel: usize = shape.iter().product();
        if pos + numel * 4 > bytes.len() {
            return Err(fail(&format!("truncated payload for {name}")));
        }
        let data: Vec<f64> = bytes[pos..pos + numel * 4]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        pos += numel * 4;
        records.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok((json, records))
}

fn model_records(model: &CrnnModel) -> Vec<(String, &Tensor)> {
    let mut records = model.named_params();
    records.extend(model.named_running_stats());
    records
}

pub fn save_model(model: &CrnnModel, path: &Path) -> Result<()> {
    save_model_with_trainer(model, path, None)
}

/// Checkpoint form: extra optimizer records and a trainer-state JSON blob
/// ride along with the model.
pub fn save_model_with_trainer(
    model: &CrnnModel,
    path: &Path,
    trainer: Option<(serde_json::Value, Vec<(String, &Tensor)>)>,
) -> Result<()> {
    let (trainer_json, extra) = match trainer {
        Some((j, extra)) => (Some(j), extra),
        None => (None, Vec::new()),
    };
    let header = ModelHeader {
        config: model.cfg.clone(),
        meta: model.meta.clone(),
        trainer: trainer_json,
    };
    let json = serde_json::to_string(&header)?;
    let mut records = model_records(model);
    records.extend(extra);
    let bytes = encode_container(&json, &records);
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Loads a model; checkpoint extras are returned alongside when present.
pub fn load_model_full(
    path: &Path,
) -> Result<(CrnnModel, Option<serde_json::Value>, Vec<(String, Tensor)>)> {
    let bytes = fs::read(path)?;
    let origin = path.display().to_string();
    let (json, records) = decode_container(&bytes, &origin)?;
    let header: ModelHeader = serde_json::from_str(&json)?;
    let mut model = CrnnModel::zeros(header.config, header.meta)?;
    let mut extras = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (name, tensor) in records {
        let mut placed = false;
        model.for_each_param_mut(&mut |n, t| {
            if n == name {
                *t = tensor.clone();
                placed = true;
            }
        });
        if !placed {
            model.for_each_running_stat_mut(&mut |n, t| {
                if n == name {
                    *t = tensor.clone();
                    placed = true;
                }
            });
        }
        if placed {
            seen.insert(name);
        } else {
            extras.push((name, tensor));
        }
    }
    let expected: Vec<String> = model
        .named_params()
        .iter()
        .map(|(n, _)| n.clone())
        .chain(model.named_running_stats().iter().map(|(n, _)| n.clone()))
        .collect();
    for name in &expected {
        if !seen.contains(name) {
            return Err(Error::format(&origin, format!("missing tensor {name}")));
        }
    }
    Ok((model, header.trainer, extras))
}

pub fn load_model(path: &Path) -> Result<CrnnModel> {
    Ok(load_model_full(path)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::DspConfig;

    fn model() -> CrnnModel {
        let cfg = CrnnConfig {
            block_channels: vec![2, 3],
            convs_per_block: vec![1, 1],
            pool_strides: vec![(2, 8), (2, 8)],
            gru_hidden: 3,
            num_outputs: 2,
            leaky_slope: 0.1,
            n_mels: 64,
        };
        let meta = ModelMeta::new(vec!["speech".into(), "other".into()], DspConfig::default());
        CrnnModel::init(cfg, meta, 99).unwrap()
    }

    #[test]
    fn save_load_forward_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gpvd");
        let m = model();
        save_model(&m, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let input = Tensor::from_fn(&[1, 9, 64], |i| ((i % 17) as f64) / 17.0 - 0.4);
        let a = m.forward_eval(&input, &[9]).unwrap();
        let b = loaded.forward_eval(&input, &[9]).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn container_bytes_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gpvd");
        let m = model();
        save_model(&m, &path).unwrap();
        let original = fs::read(&path).unwrap();
        let loaded = load_model(&path).unwrap();
        let path2 = dir.path().join("m2.gpvd");
        save_model(&loaded, &path2).unwrap();
        let rewritten = fs::read(&path2).unwrap();
        assert_eq!(original, rewritten);
    }

    #[test]
    fn missing_tensor_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gpvd");
        let m = model();
        // Serialize with one record dropped.
        let header = ModelHeader {
            config: m.cfg.clone(),
            meta: m.meta.clone(),
            trainer: None,
        };
        let json = serde_json::to_string(&header).unwrap();
        let mut records = model_records(&m);
        records.pop();
        fs::write(&path, encode_container(&json, &records)).unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.gpvd");
        fs::write(&path, b"NOPE").unwrap();
        assert!(load_model(&path).is_err());
    }
}
