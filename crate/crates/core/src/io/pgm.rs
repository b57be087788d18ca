//! Binary PGM (P5) images, 8 or 16 bits per sample. 16-bit samples are
//! big-endian as the format requires.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub samples: Vec<u16>,
}

impl Pgm {
    pub fn new(width: usize, height: usize, max_value: u16, samples: Vec<u16>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::invalid("sample count differs from width × height"));
        }
        if max_value == 0 || samples.iter().any(|&s| s > max_value) {
            return Err(Error::invalid("sample exceeds the maximum value"));
        }
        Ok(Pgm {
            width,
            height,
            max_value,
            samples,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.max_value).into_bytes();
        if self.max_value < 256 {
            out.extend(self.samples.iter().map(|&s| s as u8));
        } else {
            for s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::format("PGM", "truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
        }
        if fields[0] != "P5" {
            return Err(Error::format("PGM", "only binary P5 images are supported"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::format("PGM", format!("bad number {s:?}")));
        let (width, height, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if max == 0 || max > 65535 {
            return Err(Error::format("PGM", "maximum value must be in 1..=65535"));
        }
        let data = &bytes[(pos + 1).min(bytes.len())..];
        let n = width * height;
        let samples: Vec<u16> = if max < 256 {
            if data.len() != n {
                return Err(Error::format("PGM", "payload size mismatch"));
            }
            data.iter().map(|&b| b as u16).collect()
        } else {
            if data.len() != 2 * n {
                return Err(Error::format("PGM", "payload size mismatch"));
            }
            data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        };
        Pgm::new(width, height, max as u16, samples).map_err(|e| Error::format("PGM", e.to_string()))
    }
}

/// Graspness in `[0, 1]` scaled to 16 bits.
pub fn heatmap_pgm(width: usize, height: usize, heat: &[f64]) -> Result<Pgm> {
    let samples = heat.iter().map(|&g| (g.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    Pgm::new(width, height, 65535, samples)
}

/// Binary mask as 0 / 255.
pub fn mask_pgm(width: usize, height: usize, mask: &[bool]) -> Result<Pgm> {
    Pgm::new(width, height, 255, mask.iter().map(|&m| if m { 255 } else { 0 }).collect())
}

/// Depth in millimeters, rounded and clamped to 16 bits; holes stay 0.
pub fn depth_pgm(width: usize, height: usize, depth_mm: &[f32]) -> Result<Pgm> {
    let samples = depth_mm
        .iter()
        .map(|&z| if z > 0.0 { (z as f64).round().clamp(1.0, 65535.0) as u16 } else { 0 })
        .collect();
    Pgm::new(width, height, 65535, samples)
}

pub fn write_file(path: &Path, pgm: &Pgm) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&pgm.encode())?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Pgm> {
    Pgm::decode(&std::fs::read(path)?)
}
