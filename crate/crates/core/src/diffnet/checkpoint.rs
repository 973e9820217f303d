//! Checkpoint directory: `manifest.json` (tensor table + free-form metadata)
//! and `params.bin` (concatenated little-endian `f32`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::params::{ParamStore, Tensor};
use crate::canonical::{read_json, write_json};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const PARAMS_FILE: &str = "params.bin";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    tensors: Vec<TensorEntry>,
    metadata: Value,
}

pub fn save_checkpoint(params: &ParamStore, metadata: &Value, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bin = Vec::with_capacity(params.num_scalars() * 4);
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        let offset = bin.len();
        for &x in &t.data {
            bin.extend_from_slice(&(x as f32).to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape.clone(),
            dtype: "f32le".into(),
            offset,
            length: bin.len() - offset,
        });
    }
    let bin_path = dir.join(PARAMS_FILE);
    fs::write(&bin_path, &bin).map_err(|e| Error::io(&bin_path, e))?;
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        tensors,
        metadata: metadata.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore, Value)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = read_json(&manifest_path)?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::corrupt(
            &manifest_path,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let bin_path = dir.join(PARAMS_FILE);
    let bin = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut params = ParamStore::new();
    let mut expected_end = 0usize;
    for entry in &manifest.tensors {
        if entry.dtype != "f32le" {
            return Err(Error::corrupt(&manifest_path, format!("{}: dtype {}", entry.name, entry.dtype)));
        }
        let count: usize = entry.shape.iter().product();
        if entry.length != count * 4 || entry.offset != expected_end {
            return Err(Error::corrupt(
                &manifest_path,
                format!("{}: offset/length inconsistent with shape {:?}", entry.name, entry.shape),
            ));
        }
        let end = entry.offset + entry.length;
        if end > bin.len() {
            return Err(Error::corrupt(
                &bin_path,
                format!("truncated: {} needs bytes up to {end}, file has {}", entry.name, bin.len()),
            ));
        }
        let data = bin[entry.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        params
            .insert(entry.name.clone(), Tensor::from_vec(&entry.shape, data)?)
            .map_err(|_| Error::corrupt(&manifest_path, format!("duplicate tensor {}", entry.name)))?;
        expected_end = end;
    }
    if expected_end != bin.len() {
        return Err(Error::corrupt(&bin_path, "trailing bytes after last tensor"));
    }
    Ok((params, manifest.metadata))
}

/// Loads a checkpoint whose metadata must carry `vocabulary_hash == expected`.
pub fn load_checkpoint_for_vocab(dir: &Path, expected: &str) -> Result<(ParamStore, Value)> {
    let (params, meta) = load_checkpoint(dir)?;
    let found = meta
        .get("vocabulary_hash")
        .and_then(Value::as_str)
        .unwrap_or("<missing>")
        .to_string();
    if found != expected {
        return Err(Error::VocabularyMismatch {
            expected: found,
            found: expected.to_string(),
        });
    }
    Ok((params, meta))
}
