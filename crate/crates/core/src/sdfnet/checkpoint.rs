//! Binary checkpoint container.
//!
//! Layout: magic "PCSD", format version (u32 LE), header length (u64 LE),
//! JSON header, then every tensor as raw little-endian f64. The header
//! carries caller metadata (resolved config, step, flags) plus the tensor
//! name/shape/offset table. Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CheckpointError;
use crate::params::{ParamStore, ParamTensor};

const MAGIC: [u8; 4] = *b"PCSD";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One row of the header's tensor table. Offsets and lengths count f64
/// values within the payload, not bytes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// In-memory checkpoint: arbitrary JSON metadata plus named tensors in
/// canonical order.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<ParamTensor>,
}

impl Checkpoint {
    pub fn from_store(meta: serde_json::Value, store: &ParamStore) -> Checkpoint {
        Checkpoint {
            meta,
            tensors: store.iter().cloned().collect(),
        }
    }

    /// Rebuild a parameter store preserving tensor order.
    pub fn into_store(self) -> ParamStore {
        let mut store = ParamStore::new();
        for t in self.tensors {
            store.insert(&t.name, t.values, t.shape);
        }
        store
    }

    pub fn tensor(&self, name: &str) -> Result<&ParamTensor, CheckpointError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let mut entries = Vec::with_capacity(ckpt.tensors.len());
    let mut offset = 0u64;
    for t in &ckpt.tensors {
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
            len: t.values.len() as u64,
        });
        offset += t.values.len() as u64;
    }
    let header = serde_json::to_vec(&Header {
        meta: ckpt.meta.clone(),
        tensors: entries,
    })?;

    let payload_bytes = offset as usize * 8;
    let mut out = Vec::with_capacity(4 + 4 + 8 + header.len() + payload_bytes);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in &ckpt.tensors {
        for &v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(CheckpointError::Truncated(format!(
            "{} bytes is shorter than the fixed prelude",
            bytes.len()
        )));
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[..4]);
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic { got: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let payload_start = 16usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| {
            CheckpointError::Truncated(format!(
                "header claims {header_len} bytes but only {} remain",
                bytes.len().saturating_sub(16)
            ))
        })?;
    let header: Header = serde_json::from_slice(&bytes[16..payload_start])?;

    let payload = &bytes[payload_start..];
    if payload.len() % 8 != 0 {
        return Err(CheckpointError::Truncated(format!(
            "payload of {} bytes is not a whole number of f64 values",
            payload.len()
        )));
    }
    let total = payload.len() / 8;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let expect: usize = entry.shape.iter().product();
        if expect as u64 != entry.len {
            return Err(CheckpointError::TensorMismatch {
                name: entry.name,
                shape: entry.shape,
                len: entry.len as usize,
            });
        }
        let end = entry
            .offset
            .checked_add(entry.len)
            .filter(|&e| e <= total as u64)
            .ok_or_else(|| {
                CheckpointError::Truncated(format!(
                    "tensor {} ends past the payload ({} values)",
                    entry.name, total
                ))
            })?;
        let values: Vec<f64> = (entry.offset..end)
            .map(|i| {
                let at = i as usize * 8;
                f64::from_le_bytes(payload[at..at + 8].try_into().unwrap())
            })
            .collect();
        tensors.push(ParamTensor {
            name: entry.name,
            values,
            shape: entry.shape,
        });
    }
    Ok(Checkpoint {
        meta: header.meta,
        tensors,
    })
}
