//! Map and depth scores against reference data, and the manifest record format.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster};

/// Pixel tallies of a binary comparison; flooded is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Counts over cells valid in both masks and not flooded in `exclude`.
pub fn confusion(pred: &BinaryMask, reference: &BinaryMask, exclude: Option<&BinaryMask>) -> Result<ConfusionCounts> {
    pred.geometry().ensure_same(reference.geometry(), "reference mask")?;
    if let Some(ex) = exclude {
        pred.geometry().ensure_same(ex.geometry(), "exclusion mask")?;
    }
    let mut c = ConfusionCounts::default();
    for i in 0..pred.geometry().len() {
        if pred.is_nodata(i) || reference.is_nodata(i) || exclude.is_some_and(|ex| ex.is_flooded(i)) {
            continue;
        }
        match (pred.is_flooded(i), reference.is_flooded(i)) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `(TP + TN) / total`.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::invalid("empty evaluation set"));
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// `2TP / (2TP + FP + FN)`; 1 when there is nothing to find and nothing was found.
pub fn f1(c: &ConfusionCounts) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::invalid("empty evaluation set"));
    }
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        return Ok(1.0);
    }
    Ok((2 * c.tp) as f64 / den as f64)
}

pub fn flooded_area_km2(mask: &BinaryMask) -> f64 {
    mask.flooded_count() as f64 * mask.geometry().cell_area() * 1e-6
}

/// RMSE over cells with a depth in both rasters.
pub fn depth_rmse(pred: &Raster, reference: &Raster) -> Result<f64> {
    pred.geometry().ensure_same(reference.geometry(), "reference depth")?;
    let (mut sum, mut n) = (0.0f64, 0usize);
    for i in 0..pred.geometry().len() {
        if let (Some(a), Some(b)) = (pred.get(i), reference.get(i)) {
            let d = f64::from(a) - f64::from(b);
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::degenerate("no overlap between predicted and reference depths"));
    }
    Ok((sum / n as f64).sqrt())
}

/// Surveyed high-water mark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Watermark {
    pub x: f64,
    pub y: f64,
    pub observed_depth_m: f64,
}

pub fn read_watermarks(path: &Path) -> Result<Vec<Watermark>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::parse(path, e.to_string())))
        .collect()
}

pub fn write_watermarks(points: &[Watermark], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for p in points {
        writer.serialize(p).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::parse(path, e.to_string()))?;
    crate::raster::write_atomic(path, &bytes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRmse {
    pub rmse: f64,
    pub used: usize,
    /// Points off the grid or on cells without a predicted depth.
    pub skipped: usize,
}

/// RMSE between predicted depth at each point's containing cell and the
/// observed depth.
pub fn rmse_at_points(pred: &Raster, points: &[Watermark]) -> Result<PointRmse> {
    let g = pred.geometry();
    let (mut sum, mut used, mut skipped) = (0.0f64, 0usize, 0usize);
    for p in points {
        match g.locate(p.x, p.y).and_then(|(r, c)| pred.at(r, c)) {
            Some(d) => {
                let e = f64::from(d) - p.observed_depth_m;
                sum += e * e;
                used += 1;
            }
            None => skipped += 1,
        }
    }
    if used == 0 {
        return Err(Error::degenerate(format!(
            "all {skipped} watermark points fall outside the predicted flood"
        )));
    }
    Ok(PointRmse {
        rmse: (sum / used as f64).sqrt(),
        used,
        skipped,
    })
}

/// One manifest row. Optional fields serialize as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub config_id: String,
    pub filter_method: String,
    pub filter_params: String,
    pub mapper_method: String,
    pub mapper_params: String,
    pub morph_params: String,
    pub depth_method: String,
    pub depth_params: String,
    pub acc: Option<f64>,
    pub f1: Option<f64>,
    pub area_km2: Option<f64>,
    pub rmse_m: Option<f64>,
    pub skipped_points: Option<usize>,
    pub wall_ms: u64,
    /// `ok` or `failed`.
    pub status: String,
    pub reason: String,
}

pub const MANIFEST_COLUMNS: [&str; 16] = [
    "config_id",
    "filter_method",
    "filter_params",
    "mapper_method",
    "mapper_params",
    "morph_params",
    "depth_method",
    "depth_params",
    "acc",
    "f1",
    "area_km2",
    "rmse_m",
    "skipped_points",
    "wall_ms",
    "status",
    "reason",
];

impl MetricsRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Streams records as CSV with the manifest header.
pub struct ManifestWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ManifestWriter<W> {
    /// Writes the header immediately, so an empty manifest still has one.
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        inner
            .write_record(MANIFEST_COLUMNS)
            .map_err(|e| Error::invalid(format!("manifest write failed: {e}")))?;
        Ok(ManifestWriter { inner })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        self.inner
            .serialize(record)
            .map_err(|e| Error::invalid(format!("manifest write failed: {e}")))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner
            .flush()
            .map_err(|e| Error::invalid(format!("manifest flush failed: {e}")))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::invalid(format!("manifest flush failed: {e}")))
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::parse(path, e.to_string())))
        .collect()
}
