//! MVHM heatmap raster files.
//!
//! Layout:
//!
//! ```text
//! "MVHM"            4 bytes magic
//! 0x01              format version
//! u32 LE            header length in bytes
//! JSON header       {"grid": {...}, "frame_id": "...", "dtype": "f32le"}
//! f32 LE × n        n_rows·n_cols values, row-major
//! ```

use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Heatmap;
use crate::fsio;
use crate::geometry::GroundGrid;
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"MVHM";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F32LE: &str = "f32le";
const MAX_HEADER_LEN: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("not an MVHM file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported MVHM version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("header length {0} exceeds limit")]
    HeaderTooLarge(u32),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported dtype `{0}`")]
    UnsupportedDtype(String),
    #[error("payload value at index {0} is negative or non-finite")]
    InvalidValue(usize),
    #[error("unexpected bytes after payload")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    grid: GroundGrid<f64>,
    frame_id: String,
    dtype: String,
}

/// A decoded raster. `grid` keeps the header's full-precision geometry;
/// `heatmap` carries the payload exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterFrame {
    pub frame_id: String,
    pub grid: GroundGrid<f64>,
    pub heatmap: Heatmap<f32>,
}

impl RasterFrame {
    /// Payload widened to `f64` on the header's `f64` grid.
    pub fn heatmap_f64(&self) -> Heatmap<f64> {
        let values = self
            .heatmap
            .values()
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        Heatmap::from_values(self.grid, values).expect("validated on read")
    }
}

/// Serializes `heatmap` (cast to `f32`) into MVHM bytes.
pub fn encode<T: Real>(frame_id: &str, heatmap: &Heatmap<T>) -> Vec<u8> {
    let header = Header {
        grid: heatmap.grid().cast(),
        frame_id: frame_id.to_string(),
        dtype: DTYPE_F32LE.to_string(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(9 + header.len() + 4 * heatmap.values().len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in heatmap.values() {
        let v = num_traits::ToPrimitive::to_f32(v).unwrap_or(f32::NAN);
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_raster<W: Write, T: Real>(
    mut w: W,
    frame_id: &str,
    heatmap: &Heatmap<T>,
) -> io::Result<()> {
    w.write_all(&encode(frame_id, heatmap))
}

pub fn write_raster_file<T: Real>(
    path: &Path,
    frame_id: &str,
    heatmap: &Heatmap<T>,
) -> io::Result<()> {
    fsio::atomic_write(path, &encode(frame_id, heatmap))
}

fn read_exact_or<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    what: &'static str,
) -> Result<(), RasterError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => RasterError::Truncated(what),
        _ => RasterError::Io(e),
    })
}

pub fn read_raster<R: Read>(mut r: R) -> Result<RasterFrame, RasterError> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(RasterError::BadMagic);
    }
    let mut version = [0u8; 1];
    read_exact_or(&mut r, &mut version, "version")?;
    if version[0] != VERSION {
        return Err(RasterError::UnsupportedVersion(version[0]));
    }
    let mut len = [0u8; 4];
    read_exact_or(&mut r, &mut len, "header length")?;
    let len = u32::from_le_bytes(len);
    if len > MAX_HEADER_LEN {
        return Err(RasterError::HeaderTooLarge(len));
    }
    let mut header = vec![0u8; len as usize];
    read_exact_or(&mut r, &mut header, "header")?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| RasterError::Header(e.to_string()))?;
    if header.dtype != DTYPE_F32LE {
        return Err(RasterError::UnsupportedDtype(header.dtype));
    }
    let n = header
        .grid
        .n_rows()
        .checked_mul(header.grid.n_cols())
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| RasterError::Header("grid dimensions overflow".into()))?;
    // Read in chunks so a lying header cannot force a huge allocation.
    let mut values = Vec::new();
    let mut chunk = vec![0u8; 4 * 4096];
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(4096);
        let buf = &mut chunk[..4 * take];
        read_exact_or(&mut r, buf, "payload")?;
        values.extend(
            buf.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        remaining -= take;
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(RasterError::TrailingBytes);
    }
    if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(RasterError::InvalidValue(i));
    }
    let heatmap = Heatmap::from_values(header.grid.cast(), values).expect("validated above");
    Ok(RasterFrame {
        frame_id: header.frame_id,
        grid: header.grid,
        heatmap,
    })
}

pub fn read_raster_file(path: &Path) -> Result<RasterFrame, RasterError> {
    let bytes = std::fs::read(path)?;
    read_raster(bytes.as_slice())
}
