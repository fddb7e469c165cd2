//! Sweep plans (TOML) and the loaded input set.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::{enumerate_depth, enumerate_filters};
use crate::depth::{read_sections, CrossSection, DepthConfig};
use crate::error::{Error, Result};
use crate::floodmap::{mapper_grid, morphology_grid, MapperConfig, MorphologyConfig};
use crate::metrics::{read_watermarks, Watermark};
use crate::raster::{read_mask, read_raster, BinaryMask, Raster, RasterFormat};
use crate::speckle::FilterConfig;

/// Input files. Relative paths resolve against the plan file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    /// Flood-time intensity (linear).
    pub flood: PathBuf,
    /// Pre-flood intensity for change detection.
    pub reference: Option<PathBuf>,
    pub dem: Option<PathBuf>,
    /// Seeds the active contour and is excluded from map scoring.
    pub permanent_water: Option<PathBuf>,
    pub exclusion: Option<PathBuf>,
    pub truth_mask: Option<PathBuf>,
    pub truth_depth: Option<PathBuf>,
    pub watermarks: Option<PathBuf>,
    pub sections: Option<PathBuf>,
    /// Externally despeckled flood image.
    pub external_filter: Option<PathBuf>,
    /// Externally despeckled reference image.
    pub external_filter_reference: Option<PathBuf>,
    pub external_cnn: Option<PathBuf>,
    pub external_rf: Option<PathBuf>,
}

/// Optional restriction to a list of method names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPlan {
    pub methods: Option<Vec<String>>,
}

impl SelectionPlan {
    fn admits(&self, method: &str) -> bool {
        self.methods.as_ref().is_none_or(|m| m.iter().any(|x| x == method))
    }

    fn check(&self, known: &[&str], what: &str) -> Result<()> {
        for m in self.methods.iter().flatten() {
            if !known.contains(&m.as_str()) {
                return Err(Error::invalid(format!("unknown {what} method {m:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphologyMode {
    /// Morphology off everywhere.
    #[default]
    None,
    /// The 9 morphology settings for every flood map.
    All,
    /// Morphology off everywhere, plus the 9 settings on every
    /// `sample_stride`-th filter/mapper pair.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphologyPlan {
    #[serde(default)]
    pub mode: MorphologyMode,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

fn default_stride() -> usize {
    4
}

impl Default for MorphologyPlan {
    fn default() -> Self {
        MorphologyPlan {
            mode: MorphologyMode::None,
            sample_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthPlan {
    #[serde(default = "default_true")]
    pub enabled: bool,
    pub methods: Option<Vec<String>>,
    /// Representative maps per mapper method.
    #[serde(default = "default_per_method")]
    pub per_method: usize,
}

fn default_true() -> bool {
    true
}

fn default_per_method() -> usize {
    10
}

impl Default for DepthPlan {
    fn default() -> Self {
        DepthPlan {
            enabled: true,
            methods: None,
            per_method: default_per_method(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPlan {
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Defaults to `<out_dir>/cache`; `FLOODBENCH_CACHE_DIR` overrides both.
    pub cache_dir: Option<PathBuf>,
    /// Looks of the speckle model used by the Lee filter.
    #[serde(default = "default_looks")]
    pub looks: f64,
    /// Write each configuration's mask and depth under `<out_dir>/<config_id>/`.
    #[serde(default)]
    pub write_outputs: bool,
}

fn default_jobs() -> usize {
    1
}

fn default_looks() -> f64 {
    1.0
}

impl Default for RunPlan {
    fn default() -> Self {
        RunPlan {
            jobs: default_jobs(),
            cache_dir: None,
            looks: default_looks(),
            write_outputs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub inputs: InputPaths,
    #[serde(default)]
    pub filters: SelectionPlan,
    #[serde(default)]
    pub mappers: SelectionPlan,
    #[serde(default)]
    pub morphology: MorphologyPlan,
    #[serde(default)]
    pub depth: DepthPlan,
    #[serde(default)]
    pub run: RunPlan,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

const FILTER_METHODS: [&str; 6] = ["none", "median", "lee", "lee_sigma", "frost", "external"];
const MAPPER_METHODS: [&str; 5] = [
    "global_threshold",
    "local_threshold",
    "active_contour",
    "change_detection",
    "external_mask",
];
const DEPTH_METHODS: [&str; 3] = ["fwdet", "flexth", "cross_section"];

impl SweepPlan {
    /// Plan over `inputs` with every default.
    pub fn new(inputs: InputPaths, base_dir: &Path) -> Self {
        SweepPlan {
            inputs,
            filters: SelectionPlan::default(),
            mappers: SelectionPlan::default(),
            morphology: MorphologyPlan::default(),
            depth: DepthPlan::default(),
            run: RunPlan::default(),
            base_dir: base_dir.to_path_buf(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> std::result::Result<Self, String> {
        let mut plan: SweepPlan = toml::from_str(text).map_err(|e| e.to_string())?;
        plan.base_dir = base_dir.to_path_buf();
        plan.validate().map_err(|e| e.to_string())?;
        Ok(plan)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|m| Error::parse(path, m))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.filters.check(&FILTER_METHODS, "filter")?;
        self.mappers.check(&MAPPER_METHODS, "mapper")?;
        if let Some(m) = &self.depth.methods {
            for x in m {
                if !DEPTH_METHODS.contains(&x.as_str()) {
                    return Err(Error::invalid(format!("unknown depth method {x:?}")));
                }
            }
        }
        if self.run.jobs == 0 {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        if self.morphology.sample_stride == 0 {
            return Err(Error::invalid("sample_stride must be at least 1"));
        }
        if !(self.run.looks > 0.0) {
            return Err(Error::invalid("looks must be positive"));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Filter configurations, with the external slot bound or dropped.
    pub fn filter_configs(&self, inputs: &SweepInputs) -> Vec<FilterConfig> {
        let mut out = Vec::new();
        for f in enumerate_filters() {
            if !self.filters.admits(f.method()) {
                continue;
            }
            match f {
                FilterConfig::External { .. } => match &inputs.external_filter {
                    Some(p) => out.push(FilterConfig::External { path: Some(p.clone()) }),
                    None => info!("stage=plan config=external_filter status=skipped reason=no_input"),
                },
                f => out.push(f),
            }
        }
        out
    }

    /// Mapper configurations, with external slots bound or dropped.
    pub fn mapper_configs(&self, inputs: &SweepInputs) -> Vec<MapperConfig> {
        let mut out = Vec::new();
        for m in mapper_grid() {
            if !self.mappers.admits(m.method()) {
                continue;
            }
            match m {
                MapperConfig::ExternalMask { model, .. } => {
                    let path = match model {
                        crate::floodmap::ExternalModel::Cnn => &inputs.external_cnn,
                        crate::floodmap::ExternalModel::RandomForest => &inputs.external_rf,
                    };
                    match path {
                        Some(p) => out.push(MapperConfig::ExternalMask {
                            model,
                            path: Some(p.clone()),
                        }),
                        None => info!(
                            "stage=plan config=external_mask({}) status=skipped reason=no_input",
                            model.name()
                        ),
                    }
                }
                m => out.push(m),
            }
        }
        out
    }

    /// Morphology settings for the `index`-th filter/mapper pair.
    pub fn morphology_for(&self, index: usize) -> Vec<MorphologyConfig> {
        match self.morphology.mode {
            MorphologyMode::None => vec![MorphologyConfig::DISABLED],
            MorphologyMode::All => morphology_grid(),
            MorphologyMode::Sample => {
                let mut v = vec![MorphologyConfig::DISABLED];
                if index % self.morphology.sample_stride == 0 {
                    v.extend(morphology_grid());
                }
                v
            }
        }
    }

    pub fn depth_configs(&self, inputs: &SweepInputs) -> Vec<DepthConfig> {
        if !self.depth.enabled || inputs.dem.is_none() {
            return Vec::new();
        }
        enumerate_depth()
            .into_iter()
            .filter(|d| self.depth.methods.as_ref().is_none_or(|m| m.iter().any(|x| x == d.method())))
            .filter(|d| {
                let ok = !matches!(d, DepthConfig::CrossSection) || inputs.sections.is_some();
                if !ok {
                    info!("stage=plan config=cross_section status=skipped reason=no_sections");
                }
                ok
            })
            .collect()
    }
}

/// Loaded, geometry-checked sweep inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepInputs {
    pub flood: Raster,
    pub reference: Option<Raster>,
    pub dem: Option<Raster>,
    pub permanent_water: Option<BinaryMask>,
    pub exclusion: Option<BinaryMask>,
    pub truth_mask: Option<BinaryMask>,
    pub truth_depth: Option<Raster>,
    pub watermarks: Option<Vec<Watermark>>,
    pub sections: Option<Vec<CrossSection>>,
    pub external_filter: Option<PathBuf>,
    pub external_filter_reference: Option<PathBuf>,
    pub external_cnn: Option<PathBuf>,
    pub external_rf: Option<PathBuf>,
    pub looks: f64,
}

impl SweepInputs {
    /// Inputs holding only the flood image.
    pub fn new(flood: Raster, looks: f64) -> Self {
        SweepInputs {
            flood,
            reference: None,
            dem: None,
            permanent_water: None,
            exclusion: None,
            truth_mask: None,
            truth_depth: None,
            watermarks: None,
            sections: None,
            external_filter: None,
            external_filter_reference: None,
            external_cnn: None,
            external_rf: None,
            looks,
        }
    }

    pub fn load(plan: &SweepPlan) -> Result<Self> {
        let p = &plan.inputs;
        let raster = |path: &Path| {
            let path = plan.resolve(path);
            read_raster(&path, RasterFormat::from_path(&path))
        };
        let mask = |path: &Path| {
            let path = plan.resolve(path);
            read_mask(&path, RasterFormat::from_path(&path))
        };
        let existing = |path: &Option<PathBuf>| -> Result<Option<PathBuf>> {
            path.as_ref()
                .map(|x| {
                    let x = plan.resolve(x);
                    if x.is_file() {
                        Ok(x)
                    } else {
                        Err(Error::MissingInput(format!("{} not found", x.display())))
                    }
                })
                .transpose()
        };
        let inputs = SweepInputs {
            flood: raster(&p.flood)?,
            reference: p.reference.as_deref().map(raster).transpose()?,
            dem: p.dem.as_deref().map(raster).transpose()?,
            permanent_water: p.permanent_water.as_deref().map(mask).transpose()?,
            exclusion: p.exclusion.as_deref().map(mask).transpose()?,
            truth_mask: p.truth_mask.as_deref().map(mask).transpose()?,
            truth_depth: p.truth_depth.as_deref().map(raster).transpose()?,
            watermarks: p
                .watermarks
                .as_deref()
                .map(|w| read_watermarks(&plan.resolve(w)))
                .transpose()?,
            sections: p.sections.as_deref().map(|s| read_sections(&plan.resolve(s))).transpose()?,
            external_filter: existing(&p.external_filter)?,
            external_filter_reference: existing(&p.external_filter_reference)?,
            external_cnn: existing(&p.external_cnn)?,
            external_rf: existing(&p.external_rf)?,
            looks: plan.run.looks,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    /// All in-memory layers must share the flood image's grid.
    pub fn validate(&self) -> Result<()> {
        let g = self.flood.geometry();
        let check = |other: Option<&crate::raster::Geometry>, what: &str| match other {
            Some(o) => g.ensure_same(o, what),
            None => Ok(()),
        };
        check(self.reference.as_ref().map(Raster::geometry), "reference image")?;
        check(self.dem.as_ref().map(Raster::geometry), "DEM")?;
        check(self.permanent_water.as_ref().map(BinaryMask::geometry), "permanent-water mask")?;
        check(self.exclusion.as_ref().map(BinaryMask::geometry), "exclusion mask")?;
        check(self.truth_mask.as_ref().map(BinaryMask::geometry), "truth mask")?;
        check(self.truth_depth.as_ref().map(Raster::geometry), "truth depth")?;
        if !(self.looks > 0.0) {
            return Err(Error::invalid("looks must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_plan_defaults() {
        let plan = SweepPlan::from_toml("[inputs]\nflood = \"a.fbr\"\n", Path::new("/data")).unwrap();
        assert_eq!(plan.run.jobs, 1);
        assert_eq!(plan.morphology.mode, MorphologyMode::None);
        assert_eq!(plan.resolve(&plan.inputs.flood), PathBuf::from("/data/a.fbr"));
        let again = SweepPlan::from_toml(&plan.to_toml(), Path::new("/data")).unwrap();
        assert_eq!(again, plan);
    }

    #[test]
    fn rejects_unknown_methods_and_keys() {
        let bad = "[inputs]\nflood = \"a.fbr\"\n[filters]\nmethods = [\"gauss\"]\n";
        assert!(SweepPlan::from_toml(bad, Path::new(".")).is_err());
        let typo = "[inputs]\nflood = \"a.fbr\"\n[run]\njbos = 2\n";
        assert!(SweepPlan::from_toml(typo, Path::new(".")).is_err());
    }

    #[test]
    fn sampled_morphology() {
        let mut plan = SweepPlan::new(InputPaths::default(), Path::new("."));
        plan.morphology.mode = MorphologyMode::Sample;
        plan.morphology.sample_stride = 3;
        assert_eq!(plan.morphology_for(0).len(), 10);
        assert_eq!(plan.morphology_for(1).len(), 1);
        plan.morphology.mode = MorphologyMode::All;
        assert_eq!(plan.morphology_for(1).len(), 9);
    }
}
