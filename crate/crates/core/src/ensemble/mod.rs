//! Configuration-space enumeration and ensemble sweeps.
//!
//! A configuration is a filter, a mapper, a morphology setting and optionally a
//! depth method. Its identity is a hash of a canonical text key, so ids are
//! stable across runs and platforms. External-input paths never enter the key.

mod cache;
mod pipeline;
mod plan;
mod summary;
mod sweep;

pub use cache::{CacheStats, StageCache};
pub use pipeline::{run_pipeline, Pipeline, PipelineOutput};
pub use plan::{DepthPlan, InputPaths, MorphologyMode, MorphologyPlan, RunPlan, SelectionPlan, SweepInputs, SweepPlan};
pub use summary::{summarize, write_summary, SummaryRow};
pub use sweep::{sweep, SweepControl, SweepOutcome};

use sha2::{Digest, Sha256};

use crate::depth::{depth_grid, DepthConfig};
use crate::floodmap::{mapper_grid, morphology_grid, MapperConfig, MorphologyConfig};
use crate::metrics::MetricsRecord;
use crate::speckle::{filter_grid, FilterConfig};

/// First 16 hex digits of the SHA-256 of `key`.
pub fn config_id(key: &str) -> String {
    let digest = Sha256::digest(key.as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpec {
    pub filter: FilterConfig,
    pub mapper: MapperConfig,
    pub morphology: MorphologyConfig,
    pub depth: Option<DepthConfig>,
}

impl ConfigSpec {
    pub fn new(filter: FilterConfig, mapper: MapperConfig, morphology: MorphologyConfig) -> Self {
        ConfigSpec {
            filter,
            mapper,
            morphology,
            depth: None,
        }
    }

    pub fn with_depth(&self, depth: DepthConfig) -> Self {
        ConfigSpec {
            depth: Some(depth),
            ..self.clone()
        }
    }

    /// Canonical key, e.g. `filter=median(window=5)|mapper=...|morph=off|depth=none`.
    pub fn key(&self) -> String {
        format!(
            "filter={}|mapper={}|morph={}|depth={}",
            self.filter,
            self.mapper,
            self.morphology,
            self.depth.map_or_else(|| "none".to_string(), |d| d.to_string())
        )
    }

    pub fn config_id(&self) -> String {
        config_id(&self.key())
    }

    /// Manifest row with identity columns filled and no scores.
    pub fn blank_record(&self) -> MetricsRecord {
        MetricsRecord {
            config_id: self.config_id(),
            filter_method: self.filter.method().to_string(),
            filter_params: self.filter.params(),
            mapper_method: self.mapper.method().to_string(),
            mapper_params: self.mapper.params(),
            morph_params: self.morphology.params(),
            depth_method: self.depth.map(|d| d.method().to_string()).unwrap_or_default(),
            depth_params: self.depth.map(|d| d.params()).unwrap_or_default(),
            acc: None,
            f1: None,
            area_km2: None,
            rmse_m: None,
            skipped_points: None,
            wall_ms: 0,
            status: "ok".to_string(),
            reason: String::new(),
        }
    }
}

pub fn enumerate_filters() -> Vec<FilterConfig> {
    filter_grid()
}

/// Mapper configurations, each crossed with the 9 morphology settings when
/// `with_morphology` is set, otherwise with morphology off.
pub fn enumerate_mappers(with_morphology: bool) -> Vec<(MapperConfig, MorphologyConfig)> {
    let morph = if with_morphology {
        morphology_grid()
    } else {
        vec![MorphologyConfig::DISABLED]
    };
    mapper_grid()
        .into_iter()
        .flat_map(|m| morph.iter().map(move |&g| (m.clone(), g)))
        .collect()
}

pub fn enumerate_depth() -> Vec<DepthConfig> {
    depth_grid()
}

/// Per mapper method, up to `per_method` successful flood-map records spread
/// evenly over their F1 ranking (ties by config id), endpoints included.
///
/// Records with a depth method are ignored. Output is grouped by method in
/// name order, each group in ascending F1.
pub fn select_representative_maps(records: &[MetricsRecord], per_method: usize) -> Vec<MetricsRecord> {
    let mut methods: Vec<&str> = records
        .iter()
        .filter(|r| r.is_ok() && r.depth_method.is_empty())
        .map(|r| r.mapper_method.as_str())
        .collect();
    methods.sort_unstable();
    methods.dedup();
    let mut out = Vec::new();
    for method in methods {
        let mut group: Vec<&MetricsRecord> = records
            .iter()
            .filter(|r| r.is_ok() && r.depth_method.is_empty() && r.mapper_method == method)
            .collect();
        group.sort_by(|a, b| {
            let fa = a.f1.unwrap_or(f64::NEG_INFINITY);
            let fb = b.f1.unwrap_or(f64::NEG_INFINITY);
            fa.total_cmp(&fb).then_with(|| a.config_id.cmp(&b.config_id))
        });
        let n = group.len();
        if n <= per_method {
            out.extend(group.into_iter().cloned());
            continue;
        }
        if per_method == 1 {
            out.push(group[n - 1].clone());
            continue;
        }
        for i in 0..per_method {
            let idx = ((i * (n - 1)) as f64 / (per_method - 1) as f64).round() as usize;
            out.push(group[idx].clone());
        }
    }
    out
}
