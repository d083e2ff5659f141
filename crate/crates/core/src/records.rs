//! Flat tensor record files shared by weight export and checkpoints.
//!
//! Layout (little-endian): 4-byte magic, `u32` version, `u32` header length,
//! JSON header, `u32` record count, then per record `u32` name length, UTF-8
//! name, `u32` rank, `u32` dims, and `f32` data.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{ParamStore, Real, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"VWTS";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// First 16 hex digits of the SHA-256 of the value's JSON encoding.
pub fn config_hash<S: Serialize + ?Sized>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("config serialises to JSON");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

pub fn store_records<T: Real>(store: &ParamStore<T>) -> Vec<Record> {
    store
        .iter()
        .map(|(name, t, _)| Record {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.to_f64_lossy() as f32).collect(),
        })
        .collect()
}

/// Copies records into same-named, same-shaped tensors of `store`. Every
/// store entry must be present.
pub fn load_into_store<T: Real>(store: &mut ParamStore<T>, records: &[Record], path: &Path) -> Result<()> {
    let fail = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let mut staged = Vec::with_capacity(records.len());
    for r in records {
        let id = store.by_name(&r.name).ok_or_else(|| fail(format!("unexpected tensor {}", r.name)))?;
        if store.tensor(id).shape() != r.shape.as_slice() {
            return Err(fail(format!("shape mismatch for {}: {:?} vs {:?}", r.name, r.shape, store.tensor(id).shape())));
        }
        staged.push((id, r));
    }
    if staged.len() != store.len() {
        return Err(fail(format!("expected {} tensors, found {}", store.len(), staged.len())));
    }
    for (id, r) in staged {
        *store.tensor_mut(id) = Tensor::new(r.shape.clone(), r.data.iter().map(|&v| T::from_f64_lossy(v as f64)).collect());
    }
    Ok(())
}

pub fn encode(magic: &[u8; 4], header: &serde_json::Value, records: &[Record]) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("header serialises");
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &r.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<usize> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
}

pub fn decode(bytes: &[u8], magic: &[u8; 4], path: &Path) -> Result<(serde_json::Value, Vec<Record>)> {
    let fail = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.to_string() };
    let truncated = || fail("truncated file");
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4).ok_or_else(truncated)? != magic {
        return Err(fail(&format!("bad magic (expected {})", String::from_utf8_lossy(magic))));
    }
    let version = c.u32().ok_or_else(truncated)?;
    if version != FORMAT_VERSION as usize {
        return Err(fail(&format!("unsupported format version {version}")));
    }
    let hlen = c.u32().ok_or_else(truncated)?;
    let header: serde_json::Value = serde_json::from_slice(c.take(hlen).ok_or_else(truncated)?)?;
    let count = c.u32().ok_or_else(truncated)?;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let nlen = c.u32().ok_or_else(truncated)?;
        let name = std::str::from_utf8(c.take(nlen).ok_or_else(truncated)?)
            .map_err(|_| fail("tensor name is not UTF-8"))?
            .to_string();
        let rank = c.u32().ok_or_else(truncated)?;
        let shape = (0..rank).map(|_| c.u32().ok_or_else(truncated)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(4).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        records.push(Record { name, shape, data });
    }
    if c.pos != bytes.len() {
        return Err(fail("trailing bytes after last record"));
    }
    Ok((header, records))
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("part")
    ));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, magic: &[u8; 4], header: &serde_json::Value, records: &[Record]) -> Result<()> {
    write_atomic(path, &encode(magic, header, records))
}

pub fn read_file(path: &Path, magic: &[u8; 4]) -> Result<(serde_json::Value, Vec<Record>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, magic, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let recs = vec![
            Record { name: "a.weight".into(), shape: vec![2, 1, 3], data: vec![1.0, -2.0, 3.5, 0.0, 1e-7, -0.25] },
            Record { name: "b".into(), shape: vec![1], data: vec![42.0] },
        ];
        let header = serde_json::json!({"step": 3});
        let bytes = encode(WEIGHTS_MAGIC, &header, &recs);
        let (h, r) = decode(&bytes, WEIGHTS_MAGIC, Path::new("x")).unwrap();
        assert_eq!((h, r), (header, recs));
        for cut in [3, 10, bytes.len() - 1] {
            assert!(decode(&bytes[..cut], WEIGHTS_MAGIC, Path::new("x")).is_err());
        }
        assert!(decode(&bytes, CHECKPOINT_MAGIC, Path::new("x")).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&serde_json::json!({"x": 1}));
        assert_eq!(a, config_hash(&serde_json::json!({"x": 1})));
        assert_ne!(a, config_hash(&serde_json::json!({"x": 2})));
        assert_eq!(a.len(), 16);
    }
}
