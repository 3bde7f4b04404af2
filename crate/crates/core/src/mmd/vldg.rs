//! The VLDG embedding file.
//!
//! ```text
//! "VLDG" | version u16 | count u32 | dim u32 | count*dim f32 | JSON
//! ```
//!
//! Integers and floats are little-endian, vectors row-major. The JSON block
//! runs to the end of the file and holds `{"ids": [...], "domain": ...,
//! "modality": ...}`.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{EmbeddingSet, Modality};
use crate::Style;

pub const VLDG_MAGIC: &[u8; 4] = b"VLDG";
pub const VLDG_VERSION: u16 = 1;
const HEADER: usize = 14;

#[derive(Debug, thiserror::Error)]
pub enum VldgError {
    #[error("not a VLDG file (bad magic)")]
    BadMagic,
    #[error("unsupported VLDG version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated: need {expected} bytes, have {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: Box<VldgError> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    ids: Vec<String>,
    domain: Style,
    modality: Modality,
}

pub fn decode_vldg(bytes: &[u8]) -> Result<EmbeddingSet, VldgError> {
    if bytes.len() < 4 || &bytes[..4] != VLDG_MAGIC {
        return Err(VldgError::BadMagic);
    }
    if bytes.len() < HEADER {
        return Err(VldgError::Truncated {
            expected: HEADER as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VLDG_VERSION {
        return Err(VldgError::UnsupportedVersion(version));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as u64;
    let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as u64;
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER as u64))
        .unwrap_or(u64::MAX);
    if (bytes.len() as u64) < expected {
        return Err(VldgError::Truncated {
            expected,
            found: bytes.len() as u64,
        });
    }
    let (count, dim, end) = (count as usize, dim as usize, expected as usize);
    let values: Vec<f32> = bytes[HEADER..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(VldgError::NonFinite {
            row: i / dim,
            col: i % dim,
        });
    }
    let meta: Meta = serde_json::from_slice(&bytes[end..]).map_err(|e| VldgError::Metadata(e.to_string()))?;
    if meta.ids.len() != count {
        return Err(VldgError::Metadata(format!("{} ids for {count} rows", meta.ids.len())));
    }
    let vectors = Array2::from_shape_vec((count, dim), values).expect("length checked");
    Ok(EmbeddingSet {
        domain: meta.domain,
        modality: meta.modality,
        ids: meta.ids,
        vectors,
    })
}

pub fn encode_vldg(set: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + set.vectors.len() * 4);
    out.extend_from_slice(VLDG_MAGIC);
    out.extend_from_slice(&VLDG_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    for v in set.vectors.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let meta = Meta {
        ids: set.ids.clone(),
        domain: set.domain,
        modality: set.modality,
    };
    out.extend(serde_json::to_vec(&meta).expect("metadata serializes"));
    out
}

fn at(path: &Path, e: VldgError) -> VldgError {
    VldgError::File {
        path: path.to_path_buf(),
        source: Box::new(e),
    }
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet, VldgError> {
    let bytes = std::fs::read(path).map_err(|source| VldgError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_vldg(&bytes).map_err(|e| at(path, e))
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<(), VldgError> {
    crate::fsutil::write_atomic(path, &encode_vldg(set)).map_err(|source| VldgError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Every `*.vldg` file in `dir`, in file-name order.
pub fn read_embeddings_dir(dir: &Path) -> Result<Vec<EmbeddingSet>, VldgError> {
    let io = |source| VldgError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if p.extension().is_some_and(|e| e == "vldg") {
            paths.push(p);
        }
    }
    paths.sort();
    paths.iter().map(|p| read_embeddings(p)).collect()
}
