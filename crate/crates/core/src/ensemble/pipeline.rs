//! One configuration end to end: filter, map, morphology, optional depth, metrics.
//!
//! Stage outputs are memoized in memory and, when a [`StageCache`] is attached,
//! on disk. Stage keys chain the keys of their inputs, so two configurations
//! sharing a prefix share its outputs.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use log::debug;
use sha2::{Digest, Sha256};

use super::cache::Cached;
use super::{ConfigSpec, SweepInputs};
use crate::depth::{apply_depth_config, DepthConfig, DepthField, DepthInputs};
use crate::error::{Error, Result};
use crate::floodmap::{apply_mapper_config, fit_tiles, to_db, MapperConfig, MapperInputs, TileFit};
use crate::metrics::{accuracy, confusion, depth_rmse, f1, flooded_area_km2, rmse_at_points, MetricsRecord};
use crate::raster::{BinaryMask, Raster};
use crate::speckle::{apply_filter_config, FilterConfig, SpeckleModel};

use super::StageCache;

type Shared<T> = Arc<OnceLock<std::result::Result<Arc<T>, String>>>;
type Memo<T> = Mutex<HashMap<String, Shared<T>>>;

/// Result of one configuration. Mask and depth are absent when their stage failed.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub mask: Option<BinaryMask>,
    pub depth: Option<DepthField>,
    pub record: MetricsRecord,
}

pub struct Pipeline<'a> {
    inputs: &'a SweepInputs,
    cache: Option<StageCache>,
    model: SpeckleModel,
    flood_digest: String,
    reference_digest: String,
    pw_digest: String,
    dem_digest: String,
    exclusion_digest: String,
    sections_key: String,
    external_filter_digest: String,
    external_reference_digest: String,
    external_cnn_digest: String,
    external_rf_digest: String,
    images: Memo<Raster>,
    fits: Memo<Vec<TileFit>>,
}

fn file_digest(path: Option<&Path>) -> Result<String> {
    match path {
        None => Ok("none".into()),
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            Ok(hex::encode(Sha256::digest(&bytes)))
        }
    }
}

fn shared<T>(memo: &Memo<T>, key: &str) -> Shared<T> {
    memo.lock()
        .expect("memo lock")
        .entry(key.to_string())
        .or_default()
        .clone()
}

impl<'a> Pipeline<'a> {
    /// Validates the inputs and digests every file that feeds a stage key.
    pub fn new(inputs: &'a SweepInputs, cache: Option<StageCache>) -> Result<Self> {
        inputs.validate()?;
        Ok(Pipeline {
            model: SpeckleModel::new(inputs.looks)?,
            flood_digest: inputs.flood.digest(),
            reference_digest: inputs.reference.as_ref().map_or("none".into(), Raster::digest),
            pw_digest: inputs.permanent_water.as_ref().map_or("none".into(), BinaryMask::digest),
            dem_digest: inputs.dem.as_ref().map_or("none".into(), Raster::digest),
            exclusion_digest: inputs.exclusion.as_ref().map_or("none".into(), BinaryMask::digest),
            sections_key: format!("{:?}", inputs.sections),
            external_filter_digest: file_digest(inputs.external_filter.as_deref())?,
            external_reference_digest: file_digest(inputs.external_filter_reference.as_deref())?,
            external_cnn_digest: file_digest(inputs.external_cnn.as_deref())?,
            external_rf_digest: file_digest(inputs.external_rf.as_deref())?,
            inputs,
            cache,
            images: Mutex::default(),
            fits: Mutex::default(),
        })
    }

    pub fn inputs(&self) -> &SweepInputs {
        self.inputs
    }

    pub fn cache(&self) -> Option<&StageCache> {
        self.cache.as_ref()
    }

    fn filter_key(&self, filter: &FilterConfig, reference: bool) -> String {
        let (image, external) = if reference {
            (&self.reference_digest, &self.external_reference_digest)
        } else {
            (&self.flood_digest, &self.external_filter_digest)
        };
        let external = if matches!(filter, FilterConfig::External { .. }) {
            external.as_str()
        } else {
            ""
        };
        StageCache::key(&[
            "filter",
            image,
            &filter.to_string(),
            &self.model.looks().to_string(),
            external,
        ])
    }

    /// Filtered flood image, or the filtered reference image.
    pub fn filtered(&self, filter: &FilterConfig, reference: bool) -> std::result::Result<Arc<Raster>, String> {
        let key = self.filter_key(filter, reference);
        let cell = shared(&self.images, &key);
        cell.get_or_init(|| {
            let source = if reference {
                self.inputs
                    .reference
                    .as_ref()
                    .ok_or("missing input: reference image required for change detection")?
            } else {
                &self.inputs.flood
            };
            let filter = match filter {
                FilterConfig::External { .. } if reference => FilterConfig::External {
                    path: self.inputs.external_filter_reference.clone(),
                },
                FilterConfig::External { .. } => FilterConfig::External {
                    path: self.inputs.external_filter.clone(),
                },
                f => f.clone(),
            };
            if let Some(cache) = &self.cache {
                if let Cached::Hit(r) = cache.get_raster(&key) {
                    return Ok(Arc::new(r));
                }
            }
            let out = apply_filter_config(source, &filter, &self.model).map_err(|e| e.to_string())?;
            if let Some(cache) = &self.cache {
                cache.put_raster(&key, &out).map_err(|e| e.to_string())?;
            }
            Ok(Arc::new(out))
        })
        .clone()
    }

    fn tile_fits(&self, filter: &FilterConfig, min_side: usize) -> std::result::Result<Arc<Vec<TileFit>>, String> {
        let key = format!("{}|{min_side}", self.filter_key(filter, false));
        let cell = shared(&self.fits, &key);
        cell.get_or_init(|| {
            let image = self.filtered(filter, false)?;
            Ok(Arc::new(fit_tiles(&to_db(&image), min_side)))
        })
        .clone()
    }

    fn mapper_key(&self, filter: &FilterConfig, mapper: &MapperConfig) -> String {
        let reference = if mapper.needs_reference() {
            self.filter_key(filter, true)
        } else {
            String::new()
        };
        let external = match mapper {
            MapperConfig::ExternalMask { model, .. } => match model {
                crate::floodmap::ExternalModel::Cnn => self.external_cnn_digest.as_str(),
                crate::floodmap::ExternalModel::RandomForest => self.external_rf_digest.as_str(),
            },
            _ => "",
        };
        let pw = if matches!(mapper, MapperConfig::ActiveContour(_)) {
            self.pw_digest.as_str()
        } else {
            ""
        };
        StageCache::key(&[
            "map",
            &self.filter_key(filter, false),
            &reference,
            pw,
            external,
            &mapper.to_string(),
        ])
    }

    /// Flood map before morphology.
    pub fn raw_mask(&self, filter: &FilterConfig, mapper: &MapperConfig) -> std::result::Result<BinaryMask, String> {
        let key = self.mapper_key(filter, mapper);
        let geometry = *self.inputs.flood.geometry();
        if let Some(cache) = &self.cache {
            match cache.get_mask(&key, &geometry) {
                Cached::Hit(m) => return Ok(m),
                Cached::Failed(reason) => return Err(reason),
                Cached::Miss => {}
            }
        }
        let out = self.compute_raw_mask(filter, mapper);
        if let Some(cache) = &self.cache {
            let stored = match &out {
                Ok(m) => cache.put_mask(&key, m),
                Err(reason) => cache.put_failure(&key, reason),
            };
            stored.map_err(|e| e.to_string())?;
        }
        out
    }

    fn compute_raw_mask(&self, filter: &FilterConfig, mapper: &MapperConfig) -> std::result::Result<BinaryMask, String> {
        let image = self.filtered(filter, false)?;
        let reference = if mapper.needs_reference() {
            Some(self.filtered(filter, true)?)
        } else {
            None
        };
        let fits = match mapper {
            MapperConfig::LocalThreshold(p) => Some(self.tile_fits(filter, p.min_side)?),
            _ => None,
        };
        let mapper = match mapper {
            MapperConfig::ExternalMask { model, .. } => MapperConfig::ExternalMask {
                model: *model,
                path: match model {
                    crate::floodmap::ExternalModel::Cnn => self.inputs.external_cnn.clone(),
                    crate::floodmap::ExternalModel::RandomForest => self.inputs.external_rf.clone(),
                },
            },
            m => m.clone(),
        };
        let inputs = MapperInputs {
            reference: reference.as_deref(),
            permanent_water: self.inputs.permanent_water.as_ref(),
            tile_fits: fits.as_ref().map(|f| f.as_slice()),
        };
        apply_mapper_config(&image, &mapper, &crate::floodmap::MorphologyConfig::DISABLED, &inputs)
            .map_err(|e| e.to_string())
    }

    fn depth_field(&self, mask: &BinaryMask, depth: &DepthConfig) -> std::result::Result<DepthField, String> {
        let dem = self
            .inputs
            .dem
            .as_ref()
            .ok_or("missing input: DEM required for depth estimation")?;
        let key = StageCache::key(&[
            "depth",
            &mask.digest(),
            &self.dem_digest,
            &self.exclusion_digest,
            &self.sections_key,
            &depth.to_string(),
        ]);
        let (dkey, wkey) = (format!("{key}-depth"), format!("{key}-wse"));
        if let Some(cache) = &self.cache {
            if let Some(reason) = cache.failure(&key) {
                return Err(reason);
            }
            if let (Cached::Hit(depth), Cached::Hit(wse)) = (cache.get_raster(&dkey), cache.get_raster(&wkey)) {
                return Ok(DepthField { depth, wse });
            }
        }
        let inputs = DepthInputs {
            exclusion: self.inputs.exclusion.as_ref(),
            sections: self.inputs.sections.as_deref(),
        };
        let out = apply_depth_config(mask, dem, depth, &inputs).map_err(|e| e.to_string());
        if let Some(cache) = &self.cache {
            let stored = match &out {
                Ok(f) => cache.put_raster(&dkey, &f.depth).and_then(|_| cache.put_raster(&wkey, &f.wse)),
                Err(reason) => cache.put_failure(&key, reason),
            };
            stored.map_err(|e| e.to_string())?;
        }
        out
    }

    /// Runs `cfg`. Stage failures become a failed record, never an error.
    pub fn run(&self, cfg: &ConfigSpec) -> PipelineOutput {
        let start = Instant::now();
        let mut record = cfg.blank_record();
        let mut output = PipelineOutput {
            mask: None,
            depth: None,
            record: cfg.blank_record(),
        };
        let result = self.run_stages(cfg, &mut record, &mut output);
        if let Err(reason) = result {
            record.status = "failed".into();
            record.reason = reason;
        }
        record.wall_ms = start.elapsed().as_millis() as u64;
        debug!(
            "stage=pipeline config={} status={}{}",
            record.config_id,
            record.status,
            if record.reason.is_empty() {
                String::new()
            } else {
                format!(" reason={:?}", record.reason)
            }
        );
        output.record = record;
        output
    }

    fn run_stages(
        &self,
        cfg: &ConfigSpec,
        record: &mut MetricsRecord,
        output: &mut PipelineOutput,
    ) -> std::result::Result<(), String> {
        let raw = self.raw_mask(&cfg.filter, &cfg.mapper)?;
        let mask = cfg.morphology.apply(&raw);
        record.area_km2 = Some(flooded_area_km2(&mask));
        if let Some(truth) = &self.inputs.truth_mask {
            let counts = confusion(&mask, truth, self.inputs.permanent_water.as_ref()).map_err(|e| e.to_string())?;
            record.acc = Some(accuracy(&counts).map_err(|e| e.to_string())?);
            record.f1 = Some(f1(&counts).map_err(|e| e.to_string())?);
        }
        output.mask = Some(mask);
        let Some(depth_cfg) = &cfg.depth else {
            return Ok(());
        };
        let mask = output.mask.as_ref().expect("set above");
        let field = self.depth_field(mask, depth_cfg)?;
        // Watermarks always report coverage; the reference raster wins for RMSE.
        let points = self
            .inputs
            .watermarks
            .as_ref()
            .map(|w| (w.len(), rmse_at_points(&field.depth, w)));
        if let Some((n, p)) = &points {
            record.skipped_points = Some(match p {
                Ok(p) => p.skipped,
                Err(_) => *n,
            });
        }
        record.rmse_m = match (&self.inputs.truth_depth, points) {
            (Some(truth), _) => Some(depth_rmse(&field.depth, truth).map_err(|e| e.to_string())?),
            (None, Some((_, p))) => Some(p.map_err(|e| e.to_string())?.rmse),
            (None, None) => None,
        };
        output.depth = Some(field);
        Ok(())
    }
}

/// Runs one configuration without a disk cache.
pub fn run_pipeline(inputs: &SweepInputs, cfg: &ConfigSpec) -> Result<PipelineOutput> {
    Ok(Pipeline::new(inputs, None)?.run(cfg))
}
