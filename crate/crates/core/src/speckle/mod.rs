//! Speckle filtering of linear-intensity SAR rasters and the ENL metric.
//!
//! Observed intensity is modeled as `I = R * S`, with `S` unit-mean
//! multiplicative noise of variance `1 / L` for `L` looks. All filters work on
//! linear intensity; conversion to dB happens at flood-mapping time.

mod filters;

pub use filters::{enl, frost_filter, lee_filter, lee_sigma_filter, median_filter};

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::{read_raster, Raster, RasterFormat};

/// Window sides of the filter hyperparameter grid.
pub const WINDOW_SIDES: [usize; 3] = [3, 5, 7];
/// Cumulative probabilities for Lee Sigma.
pub const LEE_SIGMA_XI: [f64; 3] = [0.7, 0.8, 0.9];
/// Frost damping factors.
pub const FROST_ALPHA: [f64; 3] = [1.0, 2.0, 3.0];

/// Multiplicative speckle statistics: unit mean, variance `1 / looks`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeckleModel {
    looks: f64,
}

impl SpeckleModel {
    /// `looks` may be `f64::INFINITY` for a noise-free model.
    pub fn new(looks: f64) -> Result<Self> {
        if !(looks > 0.0) {
            return Err(Error::invalid(format!("looks must be positive, got {looks}")));
        }
        Ok(SpeckleModel { looks })
    }

    /// Zero speckle variance.
    pub fn noiseless() -> Self {
        SpeckleModel {
            looks: f64::INFINITY,
        }
    }

    pub fn looks(&self) -> f64 {
        self.looks
    }

    pub fn mean(&self) -> f64 {
        1.0
    }

    pub fn variance(&self) -> f64 {
        1.0 / self.looks
    }
}

impl Default for SpeckleModel {
    /// Single-look.
    fn default() -> Self {
        SpeckleModel { looks: 1.0 }
    }
}

/// One point of the speckle-filter hyperparameter space.
///
/// `window` is the odd window side `2k + 1`. The external variant stands in for
/// an externally despeckled image; its path is bound when the file is supplied
/// and never takes part in the configuration identity.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterConfig {
    None,
    Median { window: usize },
    Lee { window: usize },
    LeeSigma { window: usize, xi: f64 },
    Frost { window: usize, alpha: f64 },
    External { path: Option<PathBuf> },
}

impl FilterConfig {
    pub fn method(&self) -> &'static str {
        match self {
            FilterConfig::None => "none",
            FilterConfig::Median { .. } => "median",
            FilterConfig::Lee { .. } => "lee",
            FilterConfig::LeeSigma { .. } => "lee_sigma",
            FilterConfig::Frost { .. } => "frost",
            FilterConfig::External { .. } => "external",
        }
    }

    /// Canonical `key=value` list, `;`-separated, empty when parameter-free.
    pub fn params(&self) -> String {
        match self {
            FilterConfig::None | FilterConfig::External { .. } => String::new(),
            FilterConfig::Median { window } | FilterConfig::Lee { window } => {
                format!("window={window}")
            }
            FilterConfig::LeeSigma { window, xi } => format!("window={window};xi={xi}"),
            FilterConfig::Frost { window, alpha } => format!("window={window};alpha={alpha}"),
        }
    }

    /// Half-size `k` of the window, 0 for window-free methods.
    pub fn half(&self) -> usize {
        match self {
            FilterConfig::Median { window }
            | FilterConfig::Lee { window }
            | FilterConfig::LeeSigma { window, .. }
            | FilterConfig::Frost { window, .. } => window / 2,
            _ => 0,
        }
    }

    /// Checks parameter ranges; off-grid windows, ξ and α need `allow_off_grid`.
    pub fn validate(&self, allow_off_grid: bool) -> Result<()> {
        let check_window = |w: usize| -> Result<()> {
            if w == 0 || w % 2 == 0 {
                return Err(Error::invalid(format!("window side must be odd, got {w}")));
            }
            if !allow_off_grid && !WINDOW_SIDES.contains(&w) {
                return Err(Error::invalid(format!(
                    "window side {w} outside {{3, 5, 7}}"
                )));
            }
            Ok(())
        };
        match self {
            FilterConfig::None | FilterConfig::External { .. } => Ok(()),
            FilterConfig::Median { window } | FilterConfig::Lee { window } => check_window(*window),
            FilterConfig::LeeSigma { window, xi } => {
                check_window(*window)?;
                if !(*xi > 0.0 && *xi <= 1.0) {
                    return Err(Error::invalid(format!("xi must lie in (0, 1], got {xi}")));
                }
                if !allow_off_grid && !LEE_SIGMA_XI.contains(xi) {
                    return Err(Error::invalid(format!("xi {xi} outside {{0.7, 0.8, 0.9}}")));
                }
                Ok(())
            }
            FilterConfig::Frost { window, alpha } => {
                check_window(*window)?;
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
                }
                if !allow_off_grid && !FROST_ALPHA.contains(alpha) {
                    return Err(Error::invalid(format!("alpha {alpha} outside {{1, 2, 3}}")));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for FilterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.method(), self.params())
    }
}

/// The 26-point filter grid: none, 3 median, 3 Lee, 9 Lee Sigma, 9 Frost,
/// and one external slot.
pub fn filter_grid() -> Vec<FilterConfig> {
    let mut out = vec![FilterConfig::None];
    out.extend(WINDOW_SIDES.iter().map(|&window| FilterConfig::Median { window }));
    out.extend(WINDOW_SIDES.iter().map(|&window| FilterConfig::Lee { window }));
    for &window in &WINDOW_SIDES {
        for &xi in &LEE_SIGMA_XI {
            out.push(FilterConfig::LeeSigma { window, xi });
        }
    }
    for &window in &WINDOW_SIDES {
        for &alpha in &FROST_ALPHA {
            out.push(FilterConfig::Frost { window, alpha });
        }
    }
    out.push(FilterConfig::External { path: None });
    out
}

/// Runs one filter configuration.
pub fn apply_filter_config(
    raster: &Raster,
    config: &FilterConfig,
    model: &SpeckleModel,
) -> Result<Raster> {
    config.validate(true)?;
    let k = config.half();
    Ok(match config {
        FilterConfig::None => raster.clone(),
        FilterConfig::Median { .. } => median_filter(raster, k),
        FilterConfig::Lee { .. } => lee_filter(raster, k, model),
        FilterConfig::LeeSigma { xi, .. } => lee_sigma_filter(raster, k, *xi),
        FilterConfig::Frost { alpha, .. } => frost_filter(raster, k, *alpha),
        FilterConfig::External { path } => {
            let path = path.as_deref().ok_or_else(|| {
                Error::MissingInput("external despeckled raster not supplied".into())
            })?;
            load_external(raster, path)?
        }
    })
}

fn load_external(raster: &Raster, path: &Path) -> Result<Raster> {
    let external = read_raster(path, RasterFormat::from_path(path))?;
    raster
        .geometry()
        .ensure_same(external.geometry(), "external despeckled raster")?;
    Ok(external)
}
