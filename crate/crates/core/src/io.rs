//! Image and grid file formats.
//!
//! - Binary PGM (`P5`), 8- or 16-bit grayscale. Samples are normalized to
//!   `[0, 1]` by the header's maxval on read.
//! - `WLK0` raw grids: a 16-byte header (`b"WLK0"`, `u32` rows, `u32` cols,
//!   `u32` reserved, all little-endian) followed by `rows * cols` little-endian
//!   `f32` values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Heatmap;

pub const WLK_MAGIC: &[u8; 4] = b"WLK0";

pub fn encode_wlk(map: &Heatmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * map.len());
    out.extend_from_slice(WLK_MAGIC);
    out.extend_from_slice(&(map.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(map.cols() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in map.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_wlk(bytes: &[u8], path: &Path) -> Result<Heatmap> {
    if bytes.len() < 16 || &bytes[0..4] != WLK_MAGIC {
        return Err(Error::format(path, "missing WLK0 header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    let expected = 16 + 4 * rows * cols;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("{rows}x{cols} grid needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Heatmap::new(rows, cols, values)
}

pub fn write_wlk(path: &Path, map: &Heatmap) -> Result<()> {
    fs::write(path, encode_wlk(map)).map_err(|e| Error::io(path, e))
}

pub fn read_wlk(path: &Path) -> Result<Heatmap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wlk(&bytes, path)
}

/// Encodes `[0, 1]` values as a 16-bit binary PGM. Values are clamped.
pub fn encode_pgm16(map: &Heatmap) -> Vec<u8> {
    let header = format!("P5\n{} {}\n65535\n", map.cols(), map.rows());
    let mut out = header.into_bytes();
    out.reserve(2 * map.len());
    for &v in map.values() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Encodes `[0, 1]` values as an 8-bit binary PGM. Values are clamped.
pub fn encode_pgm8(map: &Heatmap) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", map.cols(), map.rows());
    let mut out = header.into_bytes();
    out.extend(map.values().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Heatmap> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    if fields[0] != "P5" {
        return Err(Error::format(path, format!("expected P5 magic, found {:?}", fields[0])));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad PGM {what}: {s:?}")))
    };
    let cols = parse(&fields[1], "width")?;
    let rows = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != rows * cols * bytes_per_sample {
        return Err(Error::format(
            path,
            format!(
                "PGM raster has {} bytes, expected {}",
                data.len(),
                rows * cols * bytes_per_sample
            ),
        ));
    }
    let scale = 1.0 / maxval as f64;
    let values = if bytes_per_sample == 1 {
        data.iter().map(|&b| b as f64 * scale).collect()
    } else {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    };
    Heatmap::new(rows, cols, values)
}

pub fn read_pgm(path: &Path) -> Result<Heatmap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

pub fn write_pgm16(path: &Path, map: &Heatmap) -> Result<()> {
    fs::write(path, encode_pgm16(map)).map_err(|e| Error::io(path, e))
}

/// Reads a grayscale image, dispatching on the file's magic bytes.
pub fn read_image(path: &Path) -> Result<Heatmap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(WLK_MAGIC) {
        decode_wlk(&bytes, path)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(&bytes, path)
    } else {
        Err(Error::format(path, "unrecognized image format (expected P5 PGM or WLK0)"))
    }
}
