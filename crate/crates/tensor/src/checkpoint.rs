//! Versioned binary container for model parameters and optimizer state.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "FMODCKPT"
//! version u32
//! u32 count, then count × (str key, str value)         metadata
//! u32 count, then count × (str name, 4 × u64 dims, f64 payload)   tensors
//! u32 count, then count × (str name, f64)              scalars
//! str := u32 byte length + UTF-8 bytes
//! ```
//!
//! Sections are written in key order, so equal checkpoints are byte-identical.

use std::collections::BTreeMap;

use crate::error::{Result, TensorError};
use crate::shape::Shape;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FMODCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
    pub scalars: BTreeMap<String, f64>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(TensorError::Truncated(self.pos));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let at = self.pos;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| TensorError::InvalidString(at))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            for d in t.shape().dims() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.scalars.len() as u32).to_le_bytes());
        for (name, v) in &self.scalars {
            put_str(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8).map_err(|_| TensorError::BadMagic)? != CHECKPOINT_MAGIC {
            return Err(TensorError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(TensorError::UnsupportedVersion(version));
        }
        let mut ck = Checkpoint::default();
        for _ in 0..r.u32()? {
            let k = r.str()?;
            let v = r.str()?;
            ck.meta.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.str()?;
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.u64()? as usize;
            }
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
            let at = r.pos;
            let byte_len = shape.len().checked_mul(8).ok_or(TensorError::Truncated(at))?;
            let payload = r.take(byte_len)?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            ck.tensors.insert(name, Tensor::from_vec(shape, data)?);
        }
        for _ in 0..r.u32()? {
            let name = r.str()?;
            let v = r.f64()?;
            ck.scalars.insert(name, v);
        }
        if r.pos != buf.len() {
            return Err(TensorError::Truncated(r.pos));
        }
        Ok(ck)
    }
}
