//! ASCII grid and flat-binary raster files.
//!
//! ASCII grid: six header lines (`ncols`, `nrows`, `xllcorner`, `yllcorner`,
//! `cellsize`, `NODATA_value`), then whitespace-separated values, north row first.
//!
//! Flat binary: `FBR1`, u32 width, u32 height, f64 cell size, f64 origin x,
//! f64 origin y, f32 nodata, then width*height f32 values, all little-endian.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::{BinaryMask, Geometry, Raster};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FBR1";
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 8 + 4;
const ASCII_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "nodata_value",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    AsciiGrid,
    FlatBinary,
}

impl RasterFormat {
    /// `.asc` and `.txt` are ASCII grids; anything else is flat binary.
    pub fn from_path(path: &Path) -> RasterFormat {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("asc") | Some("txt") => RasterFormat::AsciiGrid,
            _ => RasterFormat::FlatBinary,
        }
    }
}

pub fn read_raster(path: &Path, format: RasterFormat) -> Result<Raster> {
    match format {
        RasterFormat::AsciiGrid => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_ascii_grid(&text).map_err(|e| annotate(path, e))
        }
        RasterFormat::FlatBinary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_flat_binary(&bytes).map_err(|e| annotate(path, e))
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_raster(raster: &Raster, path: &Path, format: RasterFormat) -> Result<()> {
    let bytes = match format {
        RasterFormat::AsciiGrid => format_ascii_grid(raster).into_bytes(),
        RasterFormat::FlatBinary => encode_flat_binary(raster),
    };
    write_atomic(path, &bytes)
}

pub fn read_mask(path: &Path, format: RasterFormat) -> Result<BinaryMask> {
    let raster = read_raster(path, format)?;
    BinaryMask::from_raster(&raster).map_err(|e| annotate(path, e))
}

pub fn write_mask(mask: &BinaryMask, path: &Path, format: RasterFormat) -> Result<()> {
    write_raster(&mask.to_raster(), path, format)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn annotate(path: &Path, err: Error) -> Error {
    match err {
        Error::InvalidInput(msg) => Error::parse(path, msg),
        Error::ValueCountMismatch { expected, found } => Error::parse(
            path,
            format!("value count mismatch: header declares {expected} cells, found {found}"),
        ),
        other => other,
    }
}

pub(crate) fn parse_ascii_grid(text: &str) -> Result<Raster> {
    let mut tokens = text.split_whitespace();
    let mut header = [0f64; 6];
    for (slot, key) in header.iter_mut().zip(ASCII_KEYS) {
        let found = tokens
            .next()
            .ok_or_else(|| Error::invalid(format!("malformed header: missing {key}")))?;
        if !found.eq_ignore_ascii_case(key) {
            return Err(Error::invalid(format!(
                "malformed header: expected {key}, found {found:?}"
            )));
        }
        let value = tokens
            .next()
            .ok_or_else(|| Error::invalid(format!("malformed header: {key} has no value")))?;
        *slot = value
            .parse()
            .map_err(|_| Error::invalid(format!("malformed header: {key} = {value:?}")))?;
    }
    let [ncols, nrows, xll, yll, cellsize, nodata] = header;
    if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
        return Err(Error::invalid(format!(
            "malformed header: dimensions {ncols}x{nrows}"
        )));
    }
    if !(cellsize > 0.0) {
        return Err(Error::invalid(format!("non-positive cell size {cellsize}")));
    }
    let geometry = Geometry::with_origin(ncols as usize, nrows as usize, cellsize, xll, yll)?;
    let values = tokens
        .map(|t| {
            t.parse::<f32>()
                .map_err(|_| Error::invalid(format!("unparsable value {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Raster::new(geometry, nodata as f32, values)
}

pub(crate) fn format_ascii_grid(raster: &Raster) -> String {
    let g = raster.geometry();
    let mut out = String::with_capacity(64 + raster.values().len() * 8);
    let _ = writeln!(out, "ncols {}", g.width);
    let _ = writeln!(out, "nrows {}", g.height);
    let _ = writeln!(out, "xllcorner {}", g.origin_x);
    let _ = writeln!(out, "yllcorner {}", g.origin_y);
    let _ = writeln!(out, "cellsize {}", g.cell_size);
    let _ = writeln!(out, "NODATA_value {}", raster.nodata());
    for row in raster.values().chunks(g.width) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            // `Display` for f32 prints the shortest string that parses back exactly.
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub(crate) fn encode_flat_binary(raster: &Raster) -> Vec<u8> {
    let g = raster.geometry();
    let mut out = Vec::with_capacity(HEADER_LEN + raster.values().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.width as u32).to_le_bytes());
    out.extend_from_slice(&(g.height as u32).to_le_bytes());
    out.extend_from_slice(&g.cell_size.to_le_bytes());
    out.extend_from_slice(&g.origin_x.to_le_bytes());
    out.extend_from_slice(&g.origin_y.to_le_bytes());
    out.extend_from_slice(&raster.nodata().to_le_bytes());
    for v in raster.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn decode_flat_binary(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::invalid("malformed header: missing FBR1 magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let width = u32_at(4) as usize;
    let height = u32_at(8) as usize;
    let cell_size = f64_at(12);
    let origin_x = f64_at(20);
    let origin_y = f64_at(28);
    let nodata = f32::from_le_bytes(bytes[36..40].try_into().unwrap());
    if !(cell_size > 0.0) {
        return Err(Error::invalid(format!("non-positive cell size {cell_size}")));
    }
    let geometry = Geometry::with_origin(width, height, cell_size, origin_x, origin_y)?;
    let body = &bytes[HEADER_LEN..];
    if body.len() % 4 != 0 {
        return Err(Error::invalid("truncated value block"));
    }
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Raster::new(geometry, nodata, values)
}
