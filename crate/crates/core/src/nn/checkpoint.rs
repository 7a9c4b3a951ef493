//! Checkpoint format: `<stem>.json` manifest (names, shapes, seed, model
//! metadata) next to `<stem>.bin`, the concatenated parameter values as
//! little-endian `f32`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    seed: u64,
    blob: String,
    params: Vec<ParamEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub meta: serde_json::Value,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn save_checkpoint(stem: &Path, params: &ParamStore, meta: serde_json::Value) -> Result<()> {
    let bin_path = with_ext(stem, "bin");
    let json_path = with_ext(stem, "json");
    let blob = bin_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let manifest = Manifest {
        seed: params.seed(),
        blob,
        params: params
            .iter()
            .map(|(name, t)| ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta,
    };
    let mut bytes = Vec::with_capacity(params.flat().len() * 4);
    for v in params.flat() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))?;
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
}

pub fn load_checkpoint(stem: &Path) -> Result<Checkpoint> {
    let json_path = with_ext(stem, "json");
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: json_path.clone(),
        source,
    })?;
    let bin_path = json_path.with_file_name(&manifest.blob);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let total: usize = manifest.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if bytes.len() != total * 4 {
        return Err(Error::Shape(format!(
            "{} holds {} bytes, manifest needs {}",
            bin_path.display(),
            bytes.len(),
            total * 4
        )));
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let mut params = ParamStore::new(manifest.seed);
    for entry in &manifest.params {
        let n: usize = entry.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        params.register(&entry.name, Tensor::from_vec(&entry.shape, data)?)?;
    }
    Ok(Checkpoint {
        params,
        meta: manifest.meta,
    })
}
