//! Binary table for encoded datasets.
//!
//! Layout (little-endian): magic `FSLP`, `u32` version, `u64` rows, `u64`
//! columns, then `rows * columns` `f32` values row-major. The last column is
//! the class identifier.

use std::fs;
use std::path::Path;

use crate::data::dataset::Dataset;
use crate::data::schema::Label;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"FSLP";
pub const CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode_cache(ds: &Dataset) -> Vec<u8> {
    let cols = ds.width() + 1;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * cols * 4);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for s in ds.samples() {
        for &v in s.features {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&(s.label.class_id() as f32).to_le_bytes());
    }
    out
}

/// Decodes a cache; `feature_names` must match the stored width when given.
pub fn decode_cache(bytes: &[u8], feature_names: Option<Vec<String>>) -> Result<Dataset> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("cache truncated: {} bytes", bytes.len())));
    }
    if &bytes[0..4] != CACHE_MAGIC {
        return Err(Error::Format("cache magic mismatch".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    if cols < 2 {
        return Err(Error::Format(format!("cache has {cols} columns, need at least 2")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("cache dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Integrity(format!(
            "cache holds {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let width = cols - 1;
    let names = match feature_names {
        Some(n) if n.len() != width => {
            return Err(Error::dimension(
                "decode_cache",
                format!("{} feature names for width {width}", n.len()),
            ))
        }
        Some(n) => n,
        None => (0..width).map(|i| format!("f{i}")).collect(),
    };
    let mut features = Vec::with_capacity(rows * width);
    let mut labels = Vec::with_capacity(rows);
    for (r, chunk) in bytes[HEADER_LEN..].chunks_exact(cols * 4).enumerate() {
        let vals: Vec<f32> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        features.extend(vals[..width].iter().map(|&v| v as f64));
        let id = vals[width];
        let label = (id.fract() == 0.0 && id >= 0.0)
            .then(|| Label::from_class_id(id as u32))
            .flatten()
            .ok_or_else(|| Error::Format(format!("row {r}: invalid class id {id}")))?;
        labels.push(label);
    }
    Dataset::new(names, features, labels, Vec::new())
}

pub fn write_cache(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cache(ds)).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: impl AsRef<Path>, feature_names: Option<Vec<String>>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cache(&bytes, feature_names)
}
