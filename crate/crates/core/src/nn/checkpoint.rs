use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.toml";
const PAYLOAD: &str = "params.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named tensors plus free-form string metadata, stored as a text manifest
/// and one little-endian `f64` payload.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    dtype: String,
    payload: String,
    payload_bytes: u64,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    #[serde(default)]
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    count: u64,
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor { name: name.into(), shape, data });
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Contract(format!("checkpoint metadata '{key}' missing")))
    }

    /// Tensor data, refusing on a missing name or a shape different from `shape`.
    pub fn get(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Contract(format!("checkpoint tensor '{name}' missing")))?;
        if t.shape != shape {
            return Err(Error::Contract(format!(
                "checkpoint tensor '{name}' has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(&t.data)
    }

    /// Writes `dir/manifest.toml` and `dir/params.bin`, creating `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            entries.push(TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset: payload.len() as u64,
                count: t.data.len() as u64,
            });
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format_version: CHECKPOINT_VERSION,
            dtype: "f64-le".into(),
            payload: PAYLOAD.into(),
            payload_bytes: payload.len() as u64,
            meta: self.meta.clone(),
            tensors: entries,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::parse(dir.join(MANIFEST), e))?;
        write_atomic(&dir.join(PAYLOAD), &payload)?;
        write_atomic(&dir.join(MANIFEST), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::parse(&mpath, e))?;
        if manifest.format_version != CHECKPOINT_VERSION {
            return Err(Error::parse(&mpath, format!("unsupported format version {}", manifest.format_version)));
        }
        if manifest.dtype != "f64-le" {
            return Err(Error::parse(&mpath, format!("unsupported dtype '{}'", manifest.dtype)));
        }
        let ppath = dir.join(&manifest.payload);
        let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
        if bytes.len() as u64 != manifest.payload_bytes {
            return Err(Error::parse(&ppath, format!("expected {} bytes, found {}", manifest.payload_bytes, bytes.len())));
        }
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let start = e.offset as usize;
            let end = start + 8 * e.count as usize;
            if end > bytes.len() || e.shape.iter().product::<usize>() as u64 != e.count {
                return Err(Error::parse(&mpath, format!("tensor '{}' is inconsistent with the payload", e.name)));
            }
            let data = bytes[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(Tensor { name: e.name, shape: e.shape, data });
        }
        Ok(Checkpoint { tensors, meta: manifest.meta })
    }
}
