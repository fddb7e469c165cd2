//! Single-pair change detection on the dB difference.

use super::histogram::{Histogram, ThresholdSelector};
use super::threshold_mask;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster};

/// `flood_db − reference_db` on cells valid in both, nodata elsewhere.
pub fn log_ratio(flood_db: &Raster, reference_db: &Raster) -> Result<Raster> {
    flood_db
        .geometry()
        .ensure_same(reference_db.geometry(), "reference image")?;
    Ok(Raster::from_fn(*flood_db.geometry(), |row, col| {
        let a = flood_db.at(row, col)?;
        let b = reference_db.at(row, col)?;
        Some(f64::from(a) - f64::from(b))
    }))
}

/// Flags cells whose backscatter dropped: `r <= t` for the selector's threshold `t`.
pub fn change_detection_map(
    flood_db: &Raster,
    reference_db: &Raster,
    selector: ThresholdSelector,
) -> Result<BinaryMask> {
    let ratio = log_ratio(flood_db, reference_db)?;
    let values: Vec<f64> = ratio.valid_values().map(f64::from).collect();
    let no_signal = |_| Error::degenerate("no change signal");
    let hist = Histogram::build(&values).map_err(no_signal)?;
    let split = selector.select(&hist).map_err(no_signal)?;
    Ok(threshold_mask(&ratio, split.threshold))
}
