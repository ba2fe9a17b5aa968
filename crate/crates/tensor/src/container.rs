//! Checkpoint container: a JSON manifest (name, dtype, shape per tensor plus
//! free-form metadata) followed by raw little-endian row-major buffers in
//! manifest order.
//!
//! Layout:
//!
//! ```text
//! magic     8 bytes   "TAVPCKPT"
//! version   u32 LE    1
//! length    u64 LE    manifest byte length
//! manifest  UTF-8 JSON
//! buffers   f32 or f64 LE, concatenated
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tensor::{numel, Precision, Tensor};

const MAGIC: &[u8; 8] = b"TAVPCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dtype: Precision,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    meta: BTreeMap<String, String>,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

impl Container {
    pub fn push(&mut self, name: impl Into<String>, dtype: Precision, tensor: Tensor) {
        self.tensors.push(NamedTensor { name: name.into(), dtype, tensor });
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Tensors whose name starts with `prefix`, with the prefix stripped.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Tensor)> + 'a {
        self.tensors
            .iter()
            .filter_map(move |t| t.name.strip_prefix(prefix).map(|n| (n, &t.tensor)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Entry {
                    name: t.name.clone(),
                    dtype: t.dtype.name().to_string(),
                    shape: t.tensor.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| TensorError::Format(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            match t.dtype {
                Precision::F64 => {
                    for v in t.tensor.data() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Precision::F32 => {
                    for v in t.tensor.data() {
                        out.extend_from_slice(&(*v as f32).to_le_bytes());
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| TensorError::Format(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint container (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(TensorError::Format(format!("unsupported container version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + len).ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest =
            serde_json::from_slice(body).map_err(|e| TensorError::Format(format!("manifest: {e}")))?;
        let mut pos = 20 + len;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let dtype = Precision::parse(&e.dtype)
                .ok_or_else(|| TensorError::Format(format!("{}: unknown dtype {}", e.name, e.dtype)))?;
            let n = numel(&e.shape);
            let width = match dtype {
                Precision::F64 => 8,
                Precision::F32 => 4,
            };
            let raw = bytes
                .get(pos..pos + n * width)
                .ok_or_else(|| TensorError::Format(format!("{}: truncated buffer", e.name)))?;
            let data = match dtype {
                Precision::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                Precision::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
            };
            pos += n * width;
            let tensor = Tensor::new(e.shape, data).map_err(|err| TensorError::Format(format!("{}: {err}", e.name)))?;
            tensors.push(NamedTensor { name: e.name, dtype, tensor });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after last buffer"));
        }
        Ok(Container { meta: manifest.meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
