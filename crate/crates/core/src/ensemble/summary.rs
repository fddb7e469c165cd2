//! Box-plot statistics per method, in long format for external plotting.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;
use crate::raster::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    /// `mapper` or `depth`.
    pub stage: String,
    pub method: String,
    pub metric: String,
    /// Successful records contributing a value.
    pub n: usize,
    /// Failed records of this method.
    pub failed: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn row(stage: &str, method: &str, metric: &str, mut values: Vec<f64>, failed: usize) -> SummaryRow {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let q = |p: f64| (n > 0).then(|| quantile(&values, p));
    SummaryRow {
        stage: stage.into(),
        method: method.into(),
        metric: metric.into(),
        n,
        failed,
        min: q(0.0),
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: q(1.0),
        mean: (n > 0).then(|| values.iter().sum::<f64>() / n as f64),
    }
}

/// F1, accuracy and area per mapper method over flood-map records; RMSE per
/// depth method over depth records. Rows are sorted by stage, method, metric.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    let mut mappers: Vec<&str> = records
        .iter()
        .filter(|r| r.depth_method.is_empty())
        .map(|r| r.mapper_method.as_str())
        .collect();
    mappers.sort_unstable();
    mappers.dedup();
    for m in mappers {
        let group: Vec<&MetricsRecord> = records
            .iter()
            .filter(|r| r.depth_method.is_empty() && r.mapper_method == m)
            .collect();
        let failed = group.iter().filter(|r| !r.is_ok()).count();
        let ok = || group.iter().filter(|r| r.is_ok());
        out.push(row("mapper", m, "acc", ok().filter_map(|r| r.acc).collect(), failed));
        out.push(row("mapper", m, "area_km2", ok().filter_map(|r| r.area_km2).collect(), failed));
        out.push(row("mapper", m, "f1", ok().filter_map(|r| r.f1).collect(), failed));
    }
    let mut depths: Vec<&str> = records
        .iter()
        .filter(|r| !r.depth_method.is_empty())
        .map(|r| r.depth_method.as_str())
        .collect();
    depths.sort_unstable();
    depths.dedup();
    for d in depths {
        let group: Vec<&MetricsRecord> = records.iter().filter(|r| r.depth_method == d).collect();
        let failed = group.iter().filter(|r| !r.is_ok()).count();
        let values = group.iter().filter(|r| r.is_ok()).filter_map(|r| r.rmse_m).collect();
        out.push(row("depth", d, "rmse_m", values, failed));
    }
    out
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::invalid(format!("summary write failed: {e}")))?;
    }
    if rows.is_empty() {
        w.write_record(["stage", "method", "metric", "n", "failed", "min", "q1", "median", "q3", "max", "mean"])
            .map_err(|e| Error::invalid(format!("summary write failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("summary write failed: {e}")))?;
    write_atomic(path, &bytes)
}
