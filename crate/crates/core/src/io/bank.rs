//! Memory-bank checkpoints.
//!
//! Layout: the magic `GKBANK1\n`, the header length as a little-endian `u64`,
//! a JSON header with `k`, `c`, `alpha` and `update_count`, then `k × c`
//! little-endian `f32` entries, row by row. Entries are stored in single
//! precision, so saving a bank rounds it; a loaded bank saves back to the
//! same bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::enhance::MemoryBank;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GKBANK1\n";
const FORMAT: &str = "bank checkpoint";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    k: usize,
    c: usize,
    alpha: f64,
    update_count: u64,
    dtype: String,
    endianness: String,
}

pub fn encode(bank: &MemoryBank) -> Result<Vec<u8>> {
    let header = Header {
        k: bank.k(),
        c: bank.dim(),
        alpha: bank.alpha,
        update_count: bank.update_count,
        dtype: "float32".into(),
        endianness: "little".into(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * bank.k() * bank.dim());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for x in bank.entries().iter().flatten() {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<MemoryBank> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format(FORMAT, "missing bank magic"));
    }
    let len = usize::try_from(u64::from_le_bytes(bytes[8..16].try_into().unwrap()))
        .ok()
        .filter(|&l| l <= bytes.len() - 16)
        .ok_or_else(|| Error::format(FORMAT, "header length exceeds file size"))?;
    let h: Header = serde_json::from_slice(&bytes[16..16 + len])
        .map_err(|e| Error::format(FORMAT, format!("bad header: {e}")))?;
    if h.dtype != "float32" || h.endianness != "little" {
        return Err(Error::format(FORMAT, "only little-endian float32 entries are supported"));
    }
    let payload = &bytes[16 + len..];
    let expected = h.k.checked_mul(h.c).and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len()) {
        return Err(Error::format(FORMAT, "payload size does not match k × c"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let entries = values.chunks(h.c.max(1)).map(<[f64]>::to_vec).collect();
    let mut bank = MemoryBank::new(entries, h.alpha).map_err(|e| Error::Invariant(e.to_string()))?;
    bank.update_count = h.update_count;
    Ok(bank)
}

pub fn write_file(path: &Path, bank: &MemoryBank) -> Result<()> {
    std::fs::write(path, encode(bank)?)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<MemoryBank> {
    decode(&std::fs::read(path)?)
}
