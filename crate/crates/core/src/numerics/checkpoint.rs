//! Binary tensor-record files shared by checkpoints, dataset frames and
//! feature exports.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "ASFT"
//! version      u32      FORMAT_VERSION
//! scalar width u8       4 (f32) or 8 (f64)
//! records...   until end of file:
//!   name length u32, name bytes (utf-8)
//!   rank u32, extents u64 × rank
//!   scalars, row-major, `scalar width` bytes each
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{AsfError, Result};

pub const MAGIC: [u8; 4] = *b"ASFT";
pub const FORMAT_VERSION: u32 = 1;

/// Storage width of scalars on disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn width(self) -> u8 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    /// Rounds `v` to what this precision stores.
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F32 => v as f32 as f64,
            Precision::F64 => v,
        }
    }

    fn from_width(w: u8) -> Option<Self> {
        match w {
            4 => Some(Precision::F32),
            8 => Some(Precision::F64),
            _ => None,
        }
    }
}

/// Serializes named tensors into the record format.
pub fn encode_records(records: &[(String, Tensor)], precision: Precision) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(precision.width());
    for (name, t) in records {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            buf.extend_from_slice(&(e as u64).to_le_bytes());
        }
        match precision {
            Precision::F64 => {
                for v in t.data() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            Precision::F32 => {
                for v in t.data() {
                    buf.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AsfError::format(self.path, "truncated record"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses the record format. `path` is only used in error messages.
pub fn decode_records(bytes: &[u8], path: &Path) -> Result<(Precision, Vec<(String, Tensor)>)> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(AsfError::format(path, "bad magic bytes"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(AsfError::format(
            path,
            format!("unsupported format version {version}"),
        ));
    }
    let width = r.take(1)?[0];
    let precision = Precision::from_width(width)
        .ok_or_else(|| AsfError::format(path, format!("unsupported scalar width {width}")))?;
    let mut records = Vec::new();
    while r.pos < bytes.len() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| AsfError::format(path, "record name is not utf-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n * width as usize)?;
        let data = match precision {
            Precision::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Precision::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        };
        records.push((name, Tensor::new(shape, data)?));
    }
    Ok((precision, records))
}

pub fn write_records(path: &Path, records: &[(String, Tensor)], precision: Precision) -> Result<()> {
    fs::write(path, encode_records(records, precision)).map_err(|e| AsfError::io(path, e))
}

pub fn read_records(path: &Path) -> Result<(Precision, Vec<(String, Tensor)>)> {
    let bytes = fs::read(path).map_err(|e| AsfError::io(path, e))?;
    decode_records(&bytes, path)
}
