//! Versioned binary container for named arrays.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "SQTGCKPT"
//! version      u32      FORMAT_VERSION
//! byte order   u8       1 = little-endian (the only value written or accepted)
//! kind         u32 length + UTF-8
//! header       u64 length + UTF-8 JSON
//! array count  u32
//! per array    u32 length + UTF-8 name, u8 rank, rank × u64 dims, f64 data
//! digest       32 bytes SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numerics::{Array, ParamSet, Shape};

pub const MAGIC: &[u8; 8] = b"SQTGCKPT";
pub const FORMAT_VERSION: u32 = 1;
const LITTLE_ENDIAN: u8 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("unsupported byte order marker {0}")]
    ByteOrder(u8),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint digest mismatch (file is corrupt)")]
    Digest,
    #[error("expected a `{expected}` checkpoint, found `{found}`")]
    Kind { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub header: serde_json::Value,
    pub arrays: Vec<(String, Array)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, header: serde_json::Value) -> Container {
        Container {
            kind: kind.into(),
            header,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, array: Array) {
        self.arrays.push((name.into(), array));
    }

    pub fn get(&self, name: &str) -> Result<&Array, CheckpointError> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing array `{name}`")))
    }

    /// Like [`get`](Self::get), also checking the shape.
    pub fn get_shaped(&self, name: &str, shape: Shape) -> Result<&Array, CheckpointError> {
        let a = self.get(name)?;
        if a.shape() != shape {
            return Err(CheckpointError::Malformed(format!(
                "array `{name}` has shape {}, expected {shape}",
                a.shape()
            )));
        }
        Ok(a)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.kind != kind {
            return Err(CheckpointError::Kind {
                expected: kind.into(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(LITTLE_ENDIAN);
        write_str32(&mut out, &self.kind);
        let header = serde_json::to_string(&self.header).expect("JSON value serializes");
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, a) in &self.arrays {
            write_str32(&mut out, name);
            let dims = a.shape().dims();
            out.push(dims.len() as u8);
            for d in dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in a.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Container, CheckpointError> {
        if bytes.len() < MAGIC.len() {
            return Err(CheckpointError::Truncated);
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 5 + DIGEST_LEN {
            return Err(CheckpointError::Truncated);
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let order = r.u8()?;
        if order != LITTLE_ENDIAN {
            return Err(CheckpointError::ByteOrder(order));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::Digest);
        }
        let kind = r.str32()?;
        let header_len = r.u64()? as usize;
        let header_bytes = r.take(header_len)?;
        let header = serde_json::from_slice(header_bytes)
            .map_err(|e| CheckpointError::Malformed(format!("header: {e}")))?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.str32()?;
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let shape = Shape::from_dims(&dims)
                .ok_or_else(|| CheckpointError::Malformed(format!("array `{name}` has rank {rank}")))?;
            let n = shape.len();
            let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            arrays.push((name, Array::new(shape, data)));
        }
        if r.pos != body.len() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        Ok(Container { kind, header, arrays })
    }

    pub fn write(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Container, CheckpointError> {
        Container::from_bytes(&fs::read(path)?)
    }
}

fn write_str32(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        if end > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str32(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("invalid UTF-8 string".into()))
    }
}

/// Appends every parameter value under its own name.
pub fn push_params<P: ParamSet + ?Sized>(c: &mut Container, params: &P) {
    params.visit(&mut |p| c.push(p.name(), p.value().clone()));
}

/// Overwrites every parameter with the array of the same name and shape.
pub fn load_params<P: ParamSet + ?Sized>(c: &Container, params: &mut P) -> Result<(), CheckpointError> {
    let mut result = Ok(());
    params.visit_mut(&mut |p| {
        if result.is_err() {
            return;
        }
        match c.get_shaped(p.name(), p.value().shape()) {
            Ok(a) => p.set_value(a.clone()),
            Err(e) => result = Err(e),
        }
    });
    result
}

/// Hex SHA-256 of a byte string, for provenance records.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `value` as pretty JSON to `<path>.json`.
pub fn write_sidecar(path: &Path, value: &serde_json::Value) -> Result<(), CheckpointError> {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    let mut text = serde_json::to_string_pretty(value).expect("JSON value serializes");
    text.push('\n');
    fs::write(Path::new(&p), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut c = Container::new("test", serde_json::json!({"a": 1, "b": ["x"]}));
        c.push("m", Array::from_rows(&[vec![1.5, -2.0], vec![0.1, f64::MIN_POSITIVE]]));
        c.push("v", Array::vector(vec![3.0]));
        c
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = Container::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.get("v").unwrap().item(), 3.0);
        assert!(back.get("missing").is_err());
    }

    #[test]
    fn every_single_byte_corruption_is_detected() {
        let bytes = sample().to_bytes();
        for i in 0..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0x40;
            assert!(Container::from_bytes(&b).is_err(), "flip at {i} went unnoticed");
        }
    }

    #[test]
    fn truncation_and_version() {
        let bytes = sample().to_bytes();
        for n in [0, 4, 12, bytes.len() - 1] {
            assert!(Container::from_bytes(&bytes[..n]).is_err());
        }
        let mut b = bytes.clone();
        b[8] = 9;
        assert!(matches!(Container::from_bytes(&b), Err(CheckpointError::Version(9))));
    }

    #[test]
    fn hex_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
