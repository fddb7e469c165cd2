//! Grid data model shared by every stage.
//!
//! Rasters are single-band, north-up (row 0 is the northern edge), with square
//! cells and a lower-left origin. Values are stored as `f32`, the on-disk
//! precision of both supported file formats, so a write/read cycle is exact.

mod components;
mod io;
mod nearest;
pub(crate) mod window;

pub use components::{connected_components, label_cells, Connectivity, LabelMap};
pub use io::{read_mask, read_raster, write_atomic, write_mask, write_raster, RasterFormat};
pub use nearest::{nearest_feature, Cell, NearestField, SourceIndex};
pub use window::{local_stats, reflect_index, GridWindow};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default nodata sentinel for rasters created in memory.
pub const DEFAULT_NODATA: f32 = -9999.0;

/// Grid placement: size in cells, square cell size in meters, lower-left origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl Geometry {
    pub fn new(width: usize, height: usize, cell_size: f64) -> Result<Self> {
        Self::with_origin(width, height, cell_size, 0.0, 0.0)
    }

    pub fn with_origin(
        width: usize,
        height: usize,
        cell_size: f64,
        origin_x: f64,
        origin_y: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::invalid(format!(
                "non-positive cell size {cell_size}"
            )));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(Error::invalid("non-finite origin"));
        }
        Ok(Geometry {
            width,
            height,
            cell_size,
            origin_x,
            origin_y,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    /// Area of one cell in square meters.
    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    /// Map coordinates of a cell center.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.origin_x + (col as f64 + 0.5) * self.cell_size;
        let y = self.origin_y + (self.height as f64 - row as f64 - 0.5) * self.cell_size;
        (x, y)
    }

    /// Containing cell of a map coordinate, if it falls on the grid.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = ((x - self.origin_x) / self.cell_size).floor();
        let top = self.origin_y + self.height as f64 * self.cell_size;
        let row = ((top - y) / self.cell_size).floor();
        if col < 0.0 || row < 0.0 || !col.is_finite() || !row.is_finite() {
            return None;
        }
        let (row, col) = (row as usize, col as usize);
        (row < self.height && col < self.width).then_some((row, col))
    }

    /// Fails unless `other` describes exactly the same grid.
    pub fn ensure_same(&self, other: &Geometry, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{what}: {}x{} @ {} ({}, {}) vs {}x{} @ {} ({}, {})",
                self.width,
                self.height,
                self.cell_size,
                self.origin_x,
                self.origin_y,
                other.width,
                other.height,
                other.cell_size,
                other.origin_x,
                other.origin_y
            )))
        }
    }

    /// 4-neighbors of a cell inside the grid.
    pub fn neighbors4(&self, row: usize, col: usize) -> impl Iterator<Item = (usize, usize)> {
        const OFFSETS: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        self.offsets(row, col, &OFFSETS)
    }

    /// 8-neighbors of a cell inside the grid.
    pub fn neighbors8(&self, row: usize, col: usize) -> impl Iterator<Item = (usize, usize)> {
        const OFFSETS: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        self.offsets(row, col, &OFFSETS)
    }

    fn offsets<'a>(
        &self,
        row: usize,
        col: usize,
        offsets: &'a [(isize, isize)],
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        let (h, w) = (self.height as isize, self.width as isize);
        let (r, c) = (row as isize, col as isize);
        offsets.iter().filter_map(move |&(dr, dc)| {
            let (nr, nc) = (r + dr, c + dc);
            (nr >= 0 && nr < h && nc >= 0 && nc < w).then_some((nr as usize, nc as usize))
        })
    }
}

/// Single-band grid of intensities, elevations or depths.
///
/// Invalid cells hold exactly the nodata sentinel; every other value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    geometry: Geometry,
    nodata: f32,
    values: Vec<f32>,
}

impl Raster {
    /// Builds a raster, replacing non-finite values by the nodata sentinel.
    pub fn new(geometry: Geometry, nodata: f32, mut values: Vec<f32>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::ValueCountMismatch {
                expected: geometry.len(),
                found: values.len(),
            });
        }
        if !nodata.is_finite() {
            return Err(Error::invalid("nodata sentinel must be finite"));
        }
        for v in &mut values {
            if !v.is_finite() {
                *v = nodata;
            }
        }
        Ok(Raster {
            geometry,
            nodata,
            values,
        })
    }

    pub fn filled(geometry: Geometry, value: f32) -> Self {
        Raster {
            geometry,
            nodata: DEFAULT_NODATA,
            values: vec![value; geometry.len()],
        }
    }

    /// Builds a raster cell by cell; `None` marks nodata.
    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut values = Vec::with_capacity(geometry.len());
        for row in 0..geometry.height {
            for col in 0..geometry.width {
                values.push(match f(row, col) {
                    Some(v) if v.is_finite() => v as f32,
                    _ => DEFAULT_NODATA,
                });
            }
        }
        Raster {
            geometry,
            nodata: DEFAULT_NODATA,
            values,
        }
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.geometry.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.geometry.height
    }

    #[inline]
    pub fn nodata(&self) -> f32 {
        self.nodata
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn is_nodata_value(&self, v: f32) -> bool {
        v == self.nodata || !v.is_finite()
    }

    /// Value at a flat index, `None` on nodata.
    #[inline]
    pub fn get(&self, index: usize) -> Option<f32> {
        let v = self.values[index];
        (!self.is_nodata_value(v)).then_some(v)
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Option<f32> {
        self.get(self.geometry.index(row, col))
    }

    /// Same geometry and nodata placement, new values computed per valid cell.
    pub fn map_valid(&self, mut f: impl FnMut(usize, f32) -> f64) -> Raster {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.is_nodata_value(v) {
                    self.nodata
                } else {
                    let out = f(i, v);
                    if out.is_finite() {
                        out as f32
                    } else {
                        self.nodata
                    }
                }
            })
            .collect();
        Raster {
            geometry: self.geometry,
            nodata: self.nodata,
            values,
        }
    }

    /// Raster with the same geometry and nodata sentinel but new values.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Raster> {
        Raster::new(self.geometry, self.nodata, values)
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.values.iter().copied().filter(|&v| !self.is_nodata_value(v))
    }

    /// Minimum and maximum over valid cells.
    pub fn min_max(&self) -> Option<(f32, f32)> {
        self.valid_values().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// SHA-256 of the flat-binary encoding; identifies raster content in caches.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(io::encode_flat_binary(self));
        hex::encode(hasher.finalize())
    }
}

/// Classification codes stored in a [`BinaryMask`].
pub mod code {
    pub const DRY: u8 = 0;
    pub const FLOODED: u8 = 1;
    pub const NODATA: u8 = 255;
}

/// Same-grid classification into dry, flooded and nodata cells.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    geometry: Geometry,
    codes: Vec<u8>,
}

impl BinaryMask {
    pub fn new(geometry: Geometry, codes: Vec<u8>) -> Result<Self> {
        if codes.len() != geometry.len() {
            return Err(Error::ValueCountMismatch {
                expected: geometry.len(),
                found: codes.len(),
            });
        }
        if let Some(bad) = codes
            .iter()
            .find(|&&c| c != code::DRY && c != code::FLOODED && c != code::NODATA)
        {
            return Err(Error::invalid(format!("invalid mask code {bad}")));
        }
        Ok(BinaryMask { geometry, codes })
    }

    pub fn filled(geometry: Geometry, value: u8) -> Self {
        debug_assert!(matches!(value, code::DRY | code::FLOODED | code::NODATA));
        BinaryMask {
            geometry,
            codes: vec![value; geometry.len()],
        }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut codes = Vec::with_capacity(geometry.len());
        for row in 0..geometry.height {
            for col in 0..geometry.width {
                codes.push(f(row, col));
            }
        }
        BinaryMask::new(geometry, codes)
    }

    /// Flooded where `pred` holds, dry elsewhere, nodata where the raster is.
    pub fn from_predicate(raster: &Raster, mut pred: impl FnMut(f32) -> bool) -> Self {
        let codes = raster
            .values()
            .iter()
            .map(|&v| {
                if raster.is_nodata_value(v) {
                    code::NODATA
                } else if pred(v) {
                    code::FLOODED
                } else {
                    code::DRY
                }
            })
            .collect();
        BinaryMask {
            geometry: *raster.geometry(),
            codes,
        }
    }

    /// Interprets raster values 0/1/255 (and the raster's nodata) as mask codes.
    pub fn from_raster(raster: &Raster) -> Result<Self> {
        let codes = raster
            .values()
            .iter()
            .map(|&v| {
                if raster.is_nodata_value(v) || v == 255.0 {
                    Ok(code::NODATA)
                } else if v == 0.0 {
                    Ok(code::DRY)
                } else if v == 1.0 {
                    Ok(code::FLOODED)
                } else {
                    Err(Error::invalid(format!("invalid mask code {v}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BinaryMask {
            geometry: *raster.geometry(),
            codes,
        })
    }

    /// Raster of codes with 255 as the nodata sentinel.
    pub fn to_raster(&self) -> Raster {
        Raster {
            geometry: self.geometry,
            nodata: code::NODATA as f32,
            values: self.codes.iter().map(|&c| c as f32).collect(),
        }
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    #[inline]
    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn into_codes(self) -> Vec<u8> {
        self.codes
    }

    #[inline]
    pub fn code(&self, index: usize) -> u8 {
        self.codes[index]
    }

    #[inline]
    pub fn is_flooded(&self, index: usize) -> bool {
        self.codes[index] == code::FLOODED
    }

    #[inline]
    pub fn is_dry(&self, index: usize) -> bool {
        self.codes[index] == code::DRY
    }

    #[inline]
    pub fn is_nodata(&self, index: usize) -> bool {
        self.codes[index] == code::NODATA
    }

    pub fn set(&mut self, index: usize, value: u8) {
        debug_assert!(matches!(value, code::DRY | code::FLOODED | code::NODATA));
        self.codes[index] = value;
    }

    pub fn flooded_count(&self) -> usize {
        self.codes.iter().filter(|&&c| c == code::FLOODED).count()
    }

    pub fn dry_count(&self) -> usize {
        self.codes.iter().filter(|&&c| c == code::DRY).count()
    }

    /// Flat indices of flooded cells in row-major order.
    pub fn flooded_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.codes
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == code::FLOODED).then_some(i))
    }

    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(io::encode_flat_binary(&self.to_raster()));
        hex::encode(hasher.finalize())
    }
}
