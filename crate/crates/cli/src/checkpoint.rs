//! Binary checkpoints: named tensors plus the configuration echo and the
//! fitted preprocessor.
//!
//! Layout (little endian): magic `FSLPCKPT`, u32 version, u64 length of
//! everything after this field, u8 training precision (0 = f32, 1 = f64),
//! then length-prefixed echo and preprocessor texts, a u32 tensor count
//! and per tensor its name, rank, dimensions and f32 values.

use std::path::Path;

use fslpn_core::numerics::{ParameterSet, Precision, Real, Tensor};
use fslpn_core::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FSLPCKPT";
pub const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Precision the parameters were trained at; values are stored as f32.
    pub precision: Precision,
    pub echo: String,
    pub preprocessor: String,
    pub params: ParameterSet<f32>,
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u64).to_le_bytes());
    out.extend_from_slice(b);
}

pub fn encode_checkpoint<T: Real>(params: &ParameterSet<T>, echo: &str, preprocessor: &str) -> Vec<u8> {
    let mut body = Vec::new();
    body.push(match T::PRECISION {
        Precision::F32 => 0u8,
        Precision::F64 => 1,
    });
    put_bytes(&mut body, echo.as_bytes());
    put_bytes(&mut body, preprocessor.as_bytes());
    body.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, entry) in params.iter() {
        let t = &entry.tensor;
        body.extend_from_slice(&(name.len() as u32).to_le_bytes());
        body.extend_from_slice(name.as_bytes());
        body.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            body.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.values() {
            body.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(HEADER + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Integrity(format!("checkpoint ends inside a field at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Integrity("length field overflows".into()))
    }

    fn text(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("checkpoint text is not utf-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let mut r = Reader { bytes, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let declared = r.len()?;
    if declared != bytes.len() - HEADER {
        return Err(Error::Integrity(format!(
            "checkpoint declares {declared} payload bytes but has {}",
            bytes.len() - HEADER
        )));
    }
    let precision = match r.take(1)?[0] {
        0 => Precision::F32,
        1 => Precision::F64,
        other => return Err(Error::Format(format!("unknown precision flag {other}"))),
    };
    let echo = r.text()?;
    let preprocessor = r.text()?;
    let count = r.u32()?;
    let mut params = ParameterSet::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::Format("tensor name is not utf-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Integrity(format!("tensor {name} shape overflows")))?;
        let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::Integrity("tensor too large".into()))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        params.insert_named(name, Tensor::new(shape, values)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Integrity(format!("{} trailing bytes after tensors", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        precision,
        echo,
        preprocessor,
        params,
    })
}

pub fn save_checkpoint<T: Real>(path: &Path, params: &ParameterSet<T>, echo: &str, preprocessor: &str) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params, echo, preprocessor)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Verifies that `params` holds exactly the tensors of `expected`, with
/// matching shapes, ignoring names `expected` lacks only when `optional`
/// says so.
pub fn check_layout<T: Real, U: Real>(params: &ParameterSet<T>, expected: &ParameterSet<U>, optional: &[&str]) -> Result<()> {
    for (name, e) in expected.iter() {
        match params.entry(name) {
            None => return Err(Error::Parameter(format!("checkpoint lacks tensor {name}"))),
            Some(p) if p.tensor.shape() != e.tensor.shape() => {
                return Err(Error::dimension(
                    "checkpoint",
                    format!(
                        "tensor {name} has shape {:?}, model expects {:?}",
                        p.tensor.shape(),
                        e.tensor.shape()
                    ),
                ))
            }
            Some(_) => {}
        }
    }
    if let Some((extra, _)) = params
        .iter()
        .find(|(n, _)| expected.entry(n).is_none() && !optional.contains(n))
    {
        return Err(Error::Parameter(format!("checkpoint has unexpected tensor {extra}")));
    }
    Ok(())
}
