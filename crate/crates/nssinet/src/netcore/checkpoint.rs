//! Checkpoint container: a JSON header followed by raw little-endian f64
//! tensors in declared order. Round trips are bit-exact.
//!
//! Layout:
//!
//! ```text
//! 8 bytes  magic "NSSICKP1"
//! 8 bytes  little-endian u64 header length
//! N bytes  header JSON: {"meta": ..., "tensors": [{"name": ..., "len": ...}]}
//! ...      tensor data, f64 little-endian, in header order
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NSSICKP1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: Value,
    tensors: Vec<TensorDecl>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorDecl {
    name: String,
    len: usize,
}

/// Serialize a checkpoint to bytes.
pub fn to_bytes(meta: &Value, tensors: &[(String, Vec<f64>)]) -> Result<Vec<u8>> {
    let header = Header {
        meta: meta.clone(),
        tensors: tensors.iter().map(|(n, t)| TensorDecl { name: n.clone(), len: t.len() }).collect(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
    let mut out = Vec::with_capacity(16 + header_json.len() + tensors.iter().map(|(_, t)| t.len() * 8).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (_, t) in tensors {
        for v in t {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    Ok(out)
}

/// Parse a checkpoint from bytes.
pub fn from_bytes(bytes: &[u8]) -> Result<(Value, Vec<(String, Vec<f64>)>)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Data("not a checkpoint: bad magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let data_start = 16usize.checked_add(header_len).ok_or_else(|| Error::Data("checkpoint header length overflows".into()))?;
    if bytes.len() < data_start {
        return Err(Error::Data("checkpoint truncated inside header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[16..data_start])
        .map_err(|e| Error::json("checkpoint header", e))?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut off = data_start;
    for decl in header.tensors {
        let nbytes = decl
            .len
            .checked_mul(8)
            .ok_or_else(|| Error::Data(format!("tensor {}: length overflows", decl.name)))?;
        let end = off
            .checked_add(nbytes)
            .ok_or_else(|| Error::Data(format!("tensor {}: offset overflows", decl.name)))?;
        if bytes.len() < end {
            return Err(Error::Data(format!("checkpoint truncated inside tensor {}", decl.name)));
        }
        let mut data = Vec::with_capacity(decl.len);
        for i in 0..decl.len {
            let b8: [u8; 8] = bytes[off + i * 8..off + i * 8 + 8].try_into().unwrap();
            data.push(f64::from_bits(u64::from_le_bytes(b8)));
        }
        tensors.push((decl.name, data));
        off = end;
    }
    if off != bytes.len() {
        return Err(Error::Data(format!(
            "checkpoint has {} trailing bytes after declared tensors",
            bytes.len() - off
        )));
    }
    Ok((header.meta, tensors))
}

pub fn save(path: impl AsRef<Path>, meta: &Value, tensors: &[(String, Vec<f64>)]) -> Result<()> {
    let bytes = to_bytes(meta, tensors)?;
    std::fs::write(path.as_ref(), bytes)
        .map_err(|e| Error::io(path.as_ref().display().to_string(), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(Value, Vec<(String, Vec<f64>)>)> {
    let bytes = std::fs::read(path.as_ref())
        .map_err(|e| Error::io(path.as_ref().display().to_string(), e))?;
    from_bytes(&bytes)
}
