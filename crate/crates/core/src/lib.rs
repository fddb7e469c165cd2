//! SAR flood workflow as an enumerable ensemble.
//!
//! Stages, in pipeline order:
//!
//! - [`speckle`]: Median, Lee, Lee Sigma and Frost filters on linear intensity, plus ENL.
//! - [`floodmap`]: global and local thresholding, Chan–Vese active contour,
//!   log-ratio change detection and morphological clean-up.
//! - [`depth`]: Fw-DET, FLEXTH and cross-section water depth from a flood mask and a DEM.
//! - [`metrics`]: confusion counts, accuracy, F1, flooded area and depth RMSE.
//! - [`ensemble`]: the hyperparameter grid, cached pipeline runs and sweeps.
//!
//! [`raster`] holds the shared grid model and file formats; [`synth`] generates
//! synthetic valley scenes with analytic ground truth.

pub mod error;
pub mod raster;
pub mod speckle;
pub mod floodmap;
pub mod depth;
pub mod metrics;
pub mod ensemble;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{BinaryMask, Geometry, Raster};
