//! Binary checkpoint format for [`ParameterSet`]s.
//!
//! All integers are unsigned 32-bit little-endian:
//!
//! ```text
//! "FSQN" | version | entry count
//! per entry: name length | UTF-8 name | rank | dim_0 .. dim_{rank-1} | f32 LE values (row-major)
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::params::{ParamError, ParameterSet};

pub const MAGIC: &[u8; 4] = b"FSQN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("parameter name is not valid UTF-8")]
    InvalidName,
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
    #[error("dimension too large to encode")]
    TooLarge,
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), CheckpointError> {
    let v = u32::try_from(v).map_err(|_| CheckpointError::TooLarge)?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn serialize(params: &ParameterSet) -> Result<Vec<u8>, CheckpointError> {
    let mut out = Vec::with_capacity(12 + params.num_values() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, params.len())?;
    for p in params.entries() {
        put_u32(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.shape.len())?;
        for &d in &p.shape {
            put_u32(&mut out, d)?;
        }
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<ParameterSet, CheckpointError> {
    let mut r = Reader { buf: bytes };
    if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = r.u32()?;
    let mut params = ParameterSet::new();
    for _ in 0..count {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| CheckpointError::InvalidName)?;
        let rank = r.u32()?;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(r.u32()?);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(CheckpointError::TooLarge)?;
        let raw = r.take(len.checked_mul(4).ok_or(CheckpointError::TooLarge)?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.push(name, shape, values)?;
    }
    if !r.buf.is_empty() {
        return Err(CheckpointError::TrailingBytes(r.buf.len()));
    }
    Ok(params)
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &ParameterSet) -> Result<(), CheckpointError> {
    fs::write(path, serialize(params)?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ParameterSet, CheckpointError> {
    deserialize(&fs::read(path)?)
}
