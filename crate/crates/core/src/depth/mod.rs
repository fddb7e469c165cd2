//! Water depth from a flood mask and a DEM.
//!
//! All methods estimate a water-surface elevation (WSE) per flooded cell and
//! report `depth = max(0, WSE - DEM)`.

mod section;
mod surface;

pub use section::{cross_section_depth, parse_sections, read_sections, CrossSection, SectionProfile};
pub use surface::{dem_slope, expand_into_exclusion, extract_boundary, flexth, fwdet, BoundarySet};

use std::fmt;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster, DEFAULT_NODATA};

pub const SLOPE_THRESHOLDS: [Option<f64>; 3] = [None, Some(5.0), Some(10.0)];
pub const FWDET_SMOOTHING: [usize; 3] = [3, 5, 10];
pub const FLEXTH_NEIGHBORS: [usize; 3] = [5, 10, 20];

/// Depth and water surface, nodata off-flood.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthField {
    pub depth: Raster,
    pub wse: Raster,
}

impl DepthField {
    pub(crate) fn from_wse(dem: &Raster, wse: &[Option<f64>]) -> DepthField {
        let g = *dem.geometry();
        let depth = Raster::from_fn(g, |row, col| {
            let i = g.index(row, col);
            let z = f64::from(dem.get(i)?);
            wse[i].map(|w| (w - z).max(0.0))
        });
        let wse = Raster::from_fn(g, |row, col| wse[g.index(row, col)]);
        DepthField { depth, wse }
    }

    /// `passes` rounds of 3x3 depth averaging over flooded cells only. The
    /// water surface is rebuilt as `DEM + depth`.
    pub(crate) fn smooth(&mut self, dem: &Raster, passes: usize) {
        let g = *self.depth.geometry();
        let mut cur: Vec<Option<f64>> = (0..g.len()).map(|i| self.depth.get(i).map(f64::from)).collect();
        let mut next = cur.clone();
        for _ in 0..passes {
            for row in 0..g.height {
                for col in 0..g.width {
                    let i = g.index(row, col);
                    let Some(own) = cur[i] else { continue };
                    let (mut sum, mut n) = (own, 1.0);
                    for (r, c) in g.neighbors8(row, col) {
                        if let Some(v) = cur[g.index(r, c)] {
                            sum += v;
                            n += 1.0;
                        }
                    }
                    next[i] = Some((sum / n).max(0.0));
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        self.depth = Raster::from_fn(g, |row, col| cur[g.index(row, col)]);
        self.wse = Raster::from_fn(g, |row, col| {
            let i = g.index(row, col);
            Some(cur[i]? + f64::from(dem.get(i)?))
        });
    }

    /// Depth-only field with nodata everywhere except `cells`.
    pub(crate) fn sparse(dem: &Raster, cells: &[(usize, f64, f64)]) -> DepthField {
        let g = *dem.geometry();
        let mut depth = vec![DEFAULT_NODATA; g.len()];
        let mut wse = vec![DEFAULT_NODATA; g.len()];
        for &(i, d, w) in cells {
            depth[i] = d as f32;
            wse[i] = w as f32;
        }
        DepthField {
            depth: Raster::new(g, DEFAULT_NODATA, depth).expect("matching length"),
            wse: Raster::new(g, DEFAULT_NODATA, wse).expect("matching length"),
        }
    }
}

/// One point of the depth-estimation hyperparameter space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthConfig {
    Fwdet {
        slope_threshold: Option<f64>,
        smoothing: usize,
    },
    Flexth {
        slope_threshold: Option<f64>,
        max_neighbors: usize,
    },
    /// Sections come from [`DepthInputs`].
    CrossSection,
}

fn slope_param(s: Option<f64>) -> String {
    s.map_or_else(|| "none".to_string(), |v| v.to_string())
}

impl DepthConfig {
    pub fn method(&self) -> &'static str {
        match self {
            DepthConfig::Fwdet { .. } => "fwdet",
            DepthConfig::Flexth { .. } => "flexth",
            DepthConfig::CrossSection => "cross_section",
        }
    }

    pub fn params(&self) -> String {
        match self {
            DepthConfig::Fwdet {
                slope_threshold,
                smoothing,
            } => format!("slope={};smoothing={smoothing}", slope_param(*slope_threshold)),
            DepthConfig::Flexth {
                slope_threshold,
                max_neighbors,
            } => format!("slope={};k={max_neighbors}", slope_param(*slope_threshold)),
            DepthConfig::CrossSection => String::new(),
        }
    }
}

impl fmt::Display for DepthConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.method(), self.params())
    }
}

/// The 19-point depth grid: 9 Fw-DET, 9 FLEXTH, 1 cross-section.
pub fn depth_grid() -> Vec<DepthConfig> {
    let mut out = Vec::with_capacity(19);
    for slope_threshold in SLOPE_THRESHOLDS {
        for smoothing in FWDET_SMOOTHING {
            out.push(DepthConfig::Fwdet {
                slope_threshold,
                smoothing,
            });
        }
    }
    for slope_threshold in SLOPE_THRESHOLDS {
        for max_neighbors in FLEXTH_NEIGHBORS {
            out.push(DepthConfig::Flexth {
                slope_threshold,
                max_neighbors,
            });
        }
    }
    out.push(DepthConfig::CrossSection);
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DepthInputs<'a> {
    /// Areas FLEXTH may grow the flood into.
    pub exclusion: Option<&'a BinaryMask>,
    pub sections: Option<&'a [CrossSection]>,
}

/// Runs one depth configuration. Cross-sections yield depth on the section
/// chains only; a later section overwrites shared cells.
pub fn apply_depth_config(
    mask: &BinaryMask,
    dem: &Raster,
    config: &DepthConfig,
    inputs: &DepthInputs<'_>,
) -> Result<DepthField> {
    mask.geometry().ensure_same(dem.geometry(), "DEM")?;
    match *config {
        DepthConfig::Fwdet {
            slope_threshold,
            smoothing,
        } => fwdet(mask, dem, slope_threshold, smoothing),
        DepthConfig::Flexth {
            slope_threshold,
            max_neighbors,
        } => flexth(mask, dem, slope_threshold, max_neighbors, inputs.exclusion),
        DepthConfig::CrossSection => {
            let sections = inputs
                .sections
                .ok_or_else(|| Error::MissingInput("cross-sections required for cross_section depth".into()))?;
            let g = mask.geometry();
            let mut cells = Vec::new();
            for section in sections {
                let profile = cross_section_depth(mask, dem, section)?;
                for (cell, d) in profile.chain.iter().zip(&profile.depths) {
                    if let Some(d) = d {
                        cells.push((g.index(cell.0, cell.1), *d, profile.wse));
                    }
                }
            }
            Ok(DepthField::sparse(dem, &cells))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{code, Geometry};

    #[test]
    fn grid_has_19_points() {
        let grid = depth_grid();
        assert_eq!(grid.len(), 19);
        let mut keys: Vec<String> = grid.iter().map(|c| c.to_string()).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 19);
    }

    #[test]
    fn constant_depth_survives_smoothing() {
        let g = Geometry::new(8, 8, 1.0).unwrap();
        let dem = Raster::filled(g, 1.0);
        let wse: Vec<Option<f64>> = (0..g.len()).map(|i| (i % 3 != 0).then_some(3.5)).collect();
        let mut f = DepthField::from_wse(&dem, &wse);
        let before = f.depth.clone();
        f.smooth(&dem, 10);
        assert_eq!(f.depth, before);
    }

    #[test]
    fn depth_nodata_exactly_off_flood() {
        let g = Geometry::new(10, 6, 2.0).unwrap();
        let dem = Raster::from_fn(g, |r, c| Some(r as f64 * 0.05 + c as f64 * 0.01));
        let mask = BinaryMask::from_fn(g, |r, _| if r < 3 { code::FLOODED } else { code::DRY }).unwrap();
        for cfg in depth_grid().iter().filter(|c| !matches!(c, DepthConfig::CrossSection)) {
            let f = apply_depth_config(&mask, &dem, cfg, &DepthInputs::default()).unwrap();
            for i in 0..g.len() {
                assert_eq!(f.depth.get(i).is_some(), mask.is_flooded(i), "{cfg} cell {i}");
                assert!(f.depth.get(i).is_none_or(|d| d >= 0.0));
            }
        }
    }

    #[test]
    fn cross_section_requires_sections() {
        let g = Geometry::new(4, 4, 1.0).unwrap();
        let err = apply_depth_config(
            &BinaryMask::filled(g, code::FLOODED),
            &Raster::filled(g, 0.0),
            &DepthConfig::CrossSection,
            &DepthInputs::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
    }
}
