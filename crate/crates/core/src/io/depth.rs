//! Depth map files: raw little-endian `f32` depths in millimeters, row by
//! row, with zero marking a hole, plus a JSON sidecar at `<file>.json`
//! holding the image size and camera intrinsics.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

const FORMAT: &str = "depth";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    width: usize,
    height: usize,
    intrinsics: CameraIntrinsics,
    unit: String,
    dtype: String,
}

/// Sidecar path of a raw depth file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(".json");
    PathBuf::from(s)
}

/// Raw payload and sidecar JSON.
pub fn encode(d: &DepthMap) -> Result<(Vec<u8>, Vec<u8>)> {
    let sidecar = serde_json::to_vec_pretty(&Sidecar {
        width: d.intrinsics.width,
        height: d.intrinsics.height,
        intrinsics: d.intrinsics,
        unit: "mm".into(),
        dtype: "float32".into(),
    })?;
    let raw = d.values.iter().flat_map(|z| z.to_le_bytes()).collect();
    Ok((raw, sidecar))
}

pub fn decode(raw: &[u8], sidecar: &[u8]) -> Result<DepthMap> {
    let h: Sidecar = serde_json::from_slice(sidecar)
        .map_err(|e| Error::format(FORMAT, format!("bad sidecar: {e}")))?;
    if h.unit != "mm" || h.dtype != "float32" {
        return Err(Error::format(FORMAT, "expected float32 millimeters"));
    }
    if (h.width, h.height) != (h.intrinsics.width, h.intrinsics.height) {
        return Err(Error::format(FORMAT, "sidecar size disagrees with its intrinsics"));
    }
    if raw.len() != 4 * h.width * h.height {
        return Err(Error::format(FORMAT, "payload size does not match the image size"));
    }
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DepthMap::new(h.intrinsics, values).map_err(|e| Error::Invariant(e.to_string()))
}

/// Writes `path` and its sidecar.
pub fn write_file(path: &Path, d: &DepthMap) -> Result<()> {
    let (raw, sidecar) = encode(d)?;
    std::fs::write(path, raw)?;
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<DepthMap> {
    decode(&std::fs::read(path)?, &std::fs::read(sidecar_path(path))?)
}
