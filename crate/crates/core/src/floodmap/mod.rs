//! Flood-extent mapping from (filtered) SAR intensity.
//!
//! Mappers take linear intensity and work internally in dB. Water is dark, so
//! every thresholding mapper flags cells at or below its threshold.

mod bimodal;
mod chan_vese;
mod change;
mod histogram;
mod local;
mod morphology;

pub use bimodal::{
    ashman_d, bhattacharyya, fit_histogram, fit_two_gaussians, BimodalityScores, GaussianComponent,
    MixtureFit, EM_MAX_ITERATIONS, EM_TOLERANCE, MIN_FIT_SAMPLES,
};
pub use chan_vese::{
    chan_vese_energy, chan_vese_map, region_means, ChanVeseOutcome, ChanVeseParams, ACTIVE_CONTOUR_ALPHA,
};
pub use change::{change_detection_map, log_ratio};
pub use histogram::{
    between_class_variance, ki_criterion, ki_threshold, otsu_threshold, Histogram, ThresholdSelector,
    TwoClassSplit, HISTOGRAM_BINS,
};
pub use local::{
    fit_tiles, leaf_tiles, local_threshold_from_fits, local_threshold_map, quadtree_tiles, TileAcceptance,
    TileExtent, TileFit,
};
pub use morphology::{fill_holes, morphology_grid, remove_patches, MorphologyConfig, MORPHOLOGY_AREAS};

use std::fmt;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::raster::{read_mask, BinaryMask, Raster, RasterFormat};

/// Intensity floor before taking logarithms.
pub const DB_FLOOR: f64 = 1e-10;

pub const LOCAL_MIN_SIDES: [usize; 2] = [100, 200];
pub const LOCAL_AD: [f64; 3] = [1.9, 2.0, 2.1];
pub const LOCAL_BC: [f64; 2] = [0.98, 0.99];
pub const LOCAL_SR: [f64; 3] = [0.05, 0.1, 0.15];

/// `10 log10(max(I, 1e-10))` on valid cells.
pub fn to_db(intensity: &Raster) -> Raster {
    intensity.map_valid(|_, v| 10.0 * f64::from(v).max(DB_FLOOR).log10())
}

/// Flooded where `value <= threshold`; nodata stays nodata.
pub fn threshold_mask(raster: &Raster, threshold: f64) -> BinaryMask {
    BinaryMask::from_predicate(raster, |v| f64::from(v) <= threshold)
}

/// Histogram threshold over the whole image.
pub fn global_threshold_map(raster_db: &Raster, selector: ThresholdSelector) -> Result<BinaryMask> {
    let values: Vec<f64> = raster_db.valid_values().map(f64::from).collect();
    let split = selector.select(&Histogram::build(&values)?)?;
    Ok(threshold_mask(raster_db, split.threshold))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalThresholdParams {
    pub min_side: usize,
    pub ashman_d: f64,
    pub bhattacharyya: f64,
    pub surface_ratio: f64,
}

impl LocalThresholdParams {
    pub fn acceptance(&self) -> TileAcceptance {
        TileAcceptance {
            ashman_d: self.ashman_d,
            bhattacharyya: self.bhattacharyya,
            surface_ratio: self.surface_ratio,
        }
    }
}

/// Supervised classifier whose masks are produced outside this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExternalModel {
    Cnn,
    RandomForest,
}

impl ExternalModel {
    pub fn name(&self) -> &'static str {
        match self {
            ExternalModel::Cnn => "cnn",
            ExternalModel::RandomForest => "rf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cnn" => Some(ExternalModel::Cnn),
            "rf" => Some(ExternalModel::RandomForest),
            _ => None,
        }
    }
}

/// One point of the flood-mapping hyperparameter space.
#[derive(Debug, Clone, PartialEq)]
pub enum MapperConfig {
    GlobalThreshold { selector: ThresholdSelector },
    LocalThreshold(LocalThresholdParams),
    ActiveContour(ChanVeseParams),
    ChangeDetection { selector: ThresholdSelector },
    /// The path is bound when the mask is supplied; it is not part of the identity.
    ExternalMask { model: ExternalModel, path: Option<PathBuf> },
}

impl MapperConfig {
    pub fn method(&self) -> &'static str {
        match self {
            MapperConfig::GlobalThreshold { .. } => "global_threshold",
            MapperConfig::LocalThreshold(_) => "local_threshold",
            MapperConfig::ActiveContour(_) => "active_contour",
            MapperConfig::ChangeDetection { .. } => "change_detection",
            MapperConfig::ExternalMask { .. } => "external_mask",
        }
    }

    pub fn params(&self) -> String {
        match self {
            MapperConfig::GlobalThreshold { selector } | MapperConfig::ChangeDetection { selector } => {
                format!("selector={selector}")
            }
            MapperConfig::LocalThreshold(p) => format!(
                "min_side={};ad={};bc={};sr={}",
                p.min_side, p.ashman_d, p.bhattacharyya, p.surface_ratio
            ),
            MapperConfig::ActiveContour(p) => format!("alpha={}", p.alpha),
            MapperConfig::ExternalMask { model, .. } => format!("model={}", model.name()),
        }
    }

    /// Whether the mapper needs the reference (pre-flood) image.
    pub fn needs_reference(&self) -> bool {
        matches!(self, MapperConfig::ChangeDetection { .. })
    }
}

impl fmt::Display for MapperConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.method(), self.params())
    }
}

/// The 48-point mapper grid: 2 global, 36 local, 6 active contour,
/// 2 change detection, 2 external.
pub fn mapper_grid() -> Vec<MapperConfig> {
    let mut out = Vec::with_capacity(48);
    for selector in ThresholdSelector::ALL {
        out.push(MapperConfig::GlobalThreshold { selector });
    }
    for &min_side in &LOCAL_MIN_SIDES {
        for &ashman_d in &LOCAL_AD {
            for &bhattacharyya in &LOCAL_BC {
                for &surface_ratio in &LOCAL_SR {
                    out.push(MapperConfig::LocalThreshold(LocalThresholdParams {
                        min_side,
                        ashman_d,
                        bhattacharyya,
                        surface_ratio,
                    }));
                }
            }
        }
    }
    for &alpha in &ACTIVE_CONTOUR_ALPHA {
        out.push(MapperConfig::ActiveContour(ChanVeseParams::with_alpha(alpha)));
    }
    for selector in ThresholdSelector::ALL {
        out.push(MapperConfig::ChangeDetection { selector });
    }
    for model in [ExternalModel::Cnn, ExternalModel::RandomForest] {
        out.push(MapperConfig::ExternalMask { model, path: None });
    }
    out
}

/// Auxiliary inputs; which are required depends on the mapper.
#[derive(Debug, Clone, Copy, Default)]
pub struct MapperInputs<'a> {
    /// Pre-flood intensity, filtered like the flood image.
    pub reference: Option<&'a Raster>,
    /// Seeds the active contour; Otsu's global map is used when absent.
    pub permanent_water: Option<&'a BinaryMask>,
    /// Precomputed quadtree fits for the dB image at the config's tile size.
    pub tile_fits: Option<&'a [TileFit]>,
}

/// Runs a mapper then the optional morphology on linear-intensity input.
pub fn apply_mapper_config(
    image: &Raster,
    config: &MapperConfig,
    morphology: &MorphologyConfig,
    inputs: &MapperInputs<'_>,
) -> Result<BinaryMask> {
    let raw = map_flood(image, config, inputs)?;
    Ok(morphology.apply(&raw))
}

fn map_flood(image: &Raster, config: &MapperConfig, inputs: &MapperInputs<'_>) -> Result<BinaryMask> {
    match config {
        MapperConfig::ExternalMask { model, path } => {
            let path = path.as_deref().ok_or_else(|| {
                Error::MissingInput(format!("external {} mask not supplied", model.name()))
            })?;
            let mask = read_mask(path, RasterFormat::from_path(path))?;
            image.geometry().ensure_same(mask.geometry(), "external mask")?;
            return Ok(mask);
        }
        MapperConfig::ChangeDetection { selector } => {
            let reference = inputs
                .reference
                .ok_or_else(|| Error::MissingInput("reference image required for change detection".into()))?;
            return change_detection_map(&to_db(image), &to_db(reference), *selector);
        }
        _ => {}
    }
    let db = to_db(image);
    match config {
        MapperConfig::GlobalThreshold { selector } => global_threshold_map(&db, *selector),
        MapperConfig::LocalThreshold(p) => match inputs.tile_fits {
            Some(fits) => local_threshold_from_fits(&db, fits, &p.acceptance()),
            None => local_threshold_map(&db, p.min_side, &p.acceptance()),
        },
        MapperConfig::ActiveContour(p) => {
            let init = match inputs.permanent_water {
                Some(m) => {
                    db.geometry().ensure_same(m.geometry(), "permanent-water mask")?;
                    m.clone()
                }
                None => global_threshold_map(&db, ThresholdSelector::Otsu)?,
            };
            let outcome = chan_vese_map(&db, &init, p)?;
            if outcome.degenerate {
                return Err(Error::degenerate("active contour degenerate: no contrast between regions"));
            }
            Ok(outcome.mask)
        }
        MapperConfig::ChangeDetection { .. } | MapperConfig::ExternalMask { .. } => unreachable!(),
    }
}
