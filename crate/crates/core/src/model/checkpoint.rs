//! Self-describing binary container for trained weights.
//!
//! ```text
//! "FCKP" | version u16 | config length u32 | config JSON | blob count u32
//! per blob: name length u16 | name | dtype u8 | ndim u8 | dims u32* | data
//! ```
//! All integers and values are little-endian; dtype 1 is f32, 2 is f64.

use std::fs;
use std::path::Path;

use super::ModelConfig;
use crate::data::format::write_atomic;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FCKP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Blob<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<S> {
    pub config: ModelConfig,
    pub blobs: Vec<Blob<S>>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format { what: "checkpoint", reason: reason.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl<S: Scalar> ModelCheckpoint<S> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = serde_json::to_vec(&self.config).map_err(|e| bad(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for b in &self.blobs {
            let name = b.name.as_bytes();
            let name_len = u16::try_from(name.len()).map_err(|_| bad("blob name too long"))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(S::DTYPE);
            out.push(b.shape.len() as u8);
            for &d in &b.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &b.data {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(bad("missing FCKP header"));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(len)?).map_err(|e| bad(format!("config: {e}")))?;
        let count = r.u32()? as usize;
        let mut blobs = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| bad("blob name is not UTF-8"))?;
            let dtype = r.u8()?;
            if dtype != S::DTYPE {
                return Err(bad(format!("blob {name} has dtype {dtype}, expected {}", S::DTYPE)));
            }
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * S::BYTES)?;
            let data = raw.chunks_exact(S::BYTES).map(S::read_le).collect();
            blobs.push(Blob { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { config, blobs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn blob(&self, name: &str) -> Option<&Blob<S>> {
        self.blobs.iter().find(|b| b.name == name)
    }
}
