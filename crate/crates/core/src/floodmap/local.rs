//! Quadtree tiling and bimodality-screened local thresholding.

use super::bimodal::{fit_histogram, BimodalityScores, MIN_FIT_SAMPLES};
use super::histogram::{ki_threshold, Histogram};
use super::threshold_mask;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Geometry, Raster};

/// Rectangular block of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileExtent {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    pub depth: usize,
}

impl TileExtent {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row && row < self.row + self.rows && col >= self.col && col < self.col + self.cols
    }
}

/// Every tile of the quadtree, ancestors included, in pre-order.
///
/// A tile is split 2x2 only if each child keeps both sides at least `min_side`;
/// odd remainders go to the last row/column of children.
pub fn quadtree_tiles(geometry: &Geometry, min_side: usize) -> Vec<TileExtent> {
    assert!(min_side >= 2, "min_side must be at least 2");
    let mut out = Vec::new();
    let root = TileExtent {
        row: 0,
        col: 0,
        rows: geometry.height,
        cols: geometry.width,
        depth: 0,
    };
    split(root, min_side, &mut out);
    out
}

fn split(tile: TileExtent, min_side: usize, out: &mut Vec<TileExtent>) {
    out.push(tile);
    let (top, left) = (tile.rows / 2, tile.cols / 2);
    if top < min_side || left < min_side {
        return;
    }
    let row_parts = [(tile.row, top), (tile.row + top, tile.rows - top)];
    let col_parts = [(tile.col, left), (tile.col + left, tile.cols - left)];
    for &(row, rows) in &row_parts {
        for &(col, cols) in &col_parts {
            split(
                TileExtent {
                    row,
                    col,
                    rows,
                    cols,
                    depth: tile.depth + 1,
                },
                min_side,
                out,
            );
        }
    }
}

/// Leaves of a pre-order tile list.
pub fn leaf_tiles(tiles: &[TileExtent]) -> Vec<TileExtent> {
    tiles
        .iter()
        .enumerate()
        .filter(|(i, t)| tiles.get(i + 1).is_none_or(|next| next.depth <= t.depth))
        .map(|(_, t)| *t)
        .collect()
}

/// Mixture scores of one tile; `None` when it has too few valid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct TileFit {
    pub tile: TileExtent,
    pub scores: Option<BimodalityScores>,
}

/// Bimodality screen for every quadtree tile. Independent of acceptance
/// thresholds, so one set of fits serves a whole threshold grid.
pub fn fit_tiles(raster_db: &Raster, min_side: usize) -> Vec<TileFit> {
    let g = raster_db.geometry();
    let mut buf = Vec::new();
    quadtree_tiles(g, min_side)
        .into_iter()
        .map(|tile| {
            buf.clear();
            for row in tile.row..tile.row + tile.rows {
                for col in tile.col..tile.col + tile.cols {
                    if let Some(v) = raster_db.at(row, col) {
                        buf.push(f64::from(v));
                    }
                }
            }
            let scores = if buf.len() < MIN_FIT_SAMPLES {
                None
            } else {
                Some(match Histogram::build(&buf) {
                    Ok(h) => fit_histogram(&h).scores,
                    Err(_) => BimodalityScores::NOT_BIMODAL,
                })
            };
            TileFit { tile, scores }
        })
        .collect()
}

/// Acceptance thresholds for the tile screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileAcceptance {
    pub ashman_d: f64,
    pub bhattacharyya: f64,
    pub surface_ratio: f64,
}

/// KI threshold over the union of accepted tiles, applied to the whole image.
pub fn local_threshold_from_fits(
    raster_db: &Raster,
    fits: &[TileFit],
    accept: &TileAcceptance,
) -> Result<BinaryMask> {
    let g = raster_db.geometry();
    let mut pooled = vec![false; g.len()];
    let mut any = false;
    for fit in fits {
        let Some(scores) = fit.scores else { continue };
        if !scores.passes(accept.ashman_d, accept.bhattacharyya, accept.surface_ratio) {
            continue;
        }
        any = true;
        let t = fit.tile;
        for row in t.row..t.row + t.rows {
            pooled[g.index(row, t.col)..g.index(row, t.col) + t.cols].fill(true);
        }
    }
    if !any {
        return Err(Error::degenerate("no bimodal tiles"));
    }
    let values: Vec<f64> = (0..g.len())
        .filter(|&i| pooled[i])
        .filter_map(|i| raster_db.get(i).map(f64::from))
        .collect();
    let split = ki_threshold(&Histogram::build(&values)?)?;
    Ok(threshold_mask(raster_db, split.threshold))
}

/// Local thresholding in one call.
pub fn local_threshold_map(
    raster_db: &Raster,
    min_side: usize,
    accept: &TileAcceptance,
) -> Result<BinaryMask> {
    let fits = fit_tiles(raster_db, min_side);
    local_threshold_from_fits(raster_db, &fits, accept)
}
