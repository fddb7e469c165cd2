//! Boundary-interpolated water surfaces: nearest boundary (Fw-DET) and
//! inverse-distance over K nearest boundary cells (FLEXTH).

use super::DepthField;
use crate::error::{Error, Result};
use crate::raster::{code, BinaryMask, Cell, Raster, SourceIndex};

/// Percent slope from central differences, one-sided at borders and beside
/// nodata. Nodata where the DEM is nodata.
pub fn dem_slope(dem: &Raster) -> Raster {
    let g = *dem.geometry();
    let cs = g.cell_size;
    let derivative = |before: Option<f32>, here: f32, after: Option<f32>| -> f64 {
        match (before, after) {
            (Some(a), Some(b)) => (f64::from(b) - f64::from(a)) / (2.0 * cs),
            (None, Some(b)) => (f64::from(b) - f64::from(here)) / cs,
            (Some(a), None) => (f64::from(here) - f64::from(a)) / cs,
            (None, None) => 0.0,
        }
    };
    Raster::from_fn(g, |row, col| {
        let z = dem.at(row, col)?;
        let west = col.checked_sub(1).and_then(|c| dem.at(row, c));
        let east = (col + 1 < g.width).then(|| dem.at(row, col + 1)).flatten();
        let north = row.checked_sub(1).and_then(|r| dem.at(r, col));
        let south = (row + 1 < g.height).then(|| dem.at(row + 1, col)).flatten();
        let dx = derivative(west, z, east);
        let dy = derivative(north, z, south);
        Some(100.0 * (dx * dx + dy * dy).sqrt())
    })
}

/// Flood-edge cells used as water-level samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    pub cells: Vec<Cell>,
    /// DEM elevation per cell, aligned with `cells`.
    pub elevations: Vec<f64>,
    pub slope_threshold: Option<f64>,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Flooded cells with at least one dry 4-neighbor and a valid elevation,
/// optionally keeping only those with percent slope `<= slope_threshold`.
pub fn extract_boundary(mask: &BinaryMask, dem: &Raster, slope_threshold: Option<f64>) -> Result<BoundarySet> {
    let g = *mask.geometry();
    g.ensure_same(dem.geometry(), "DEM")?;
    if mask.flooded_count() == 0 {
        return Err(Error::degenerate("empty flood"));
    }
    let slope = slope_threshold.map(|_| dem_slope(dem));
    let mut cells = Vec::new();
    let mut elevations = Vec::new();
    for i in mask.flooded_indices() {
        let (row, col) = g.row_col(i);
        let Some(z) = dem.get(i) else { continue };
        if !g.neighbors4(row, col).any(|(r, c)| mask.is_dry(g.index(r, c))) {
            continue;
        }
        if let (Some(limit), Some(s)) = (slope_threshold, &slope) {
            if s.get(i).is_none_or(|v| f64::from(v) > limit) {
                continue;
            }
        }
        cells.push((row, col));
        elevations.push(f64::from(z));
    }
    if cells.is_empty() {
        return Err(Error::degenerate(if slope_threshold.is_some() {
            "empty boundary after slope filtering"
        } else {
            "empty flood boundary"
        }));
    }
    Ok(BoundarySet {
        cells,
        elevations,
        slope_threshold,
    })
}

fn boundary_index(mask: &BinaryMask, boundary: &BoundarySet) -> Result<(SourceIndex, Vec<f64>)> {
    let g = mask.geometry();
    let index = SourceIndex::new(g.width, g.height, &boundary.cells)?;
    // The index reorders sources; realign elevations.
    let mut lookup: Vec<(Cell, f64)> = boundary.cells.iter().copied().zip(boundary.elevations.iter().copied()).collect();
    lookup.sort_by_key(|&(c, _)| c);
    lookup.dedup_by_key(|&mut (c, _)| c);
    Ok((index, lookup.into_iter().map(|(_, z)| z).collect()))
}

fn field_from_wse(mask: &BinaryMask, dem: &Raster, mut wse_at: impl FnMut(Cell) -> f64) -> DepthField {
    let g = *mask.geometry();
    let mut wse = vec![None; g.len()];
    for i in mask.flooded_indices() {
        if dem.get(i).is_some() {
            wse[i] = Some(wse_at(g.row_col(i)));
        }
    }
    DepthField::from_wse(dem, &wse)
}

/// Nearest-boundary water surface followed by `smoothing` 3x3 depth averages.
pub fn fwdet(mask: &BinaryMask, dem: &Raster, slope_threshold: Option<f64>, smoothing: usize) -> Result<DepthField> {
    let boundary = extract_boundary(mask, dem, slope_threshold)?;
    let (index, z) = boundary_index(mask, &boundary)?;
    let mut field = field_from_wse(mask, dem, |cell| z[index.nearest(cell).0]);
    if smoothing > 0 {
        field.smooth(dem, smoothing);
    }
    Ok(field)
}

/// Inverse-distance water surface over the `k` nearest boundary cells, with
/// distances floored at one cell.
///
/// With an exclusion mask, the flood is first grown ring by ring into
/// exclusion cells touching it, and the grown cells are mapped too.
pub fn flexth(
    mask: &BinaryMask,
    dem: &Raster,
    slope_threshold: Option<f64>,
    k: usize,
    exclusion: Option<&BinaryMask>,
) -> Result<DepthField> {
    if k == 0 {
        return Err(Error::invalid("flexth needs at least one neighbor"));
    }
    let grown;
    let mask = match exclusion {
        Some(ex) => {
            grown = expand_into_exclusion(mask, ex)?;
            &grown
        }
        None => mask,
    };
    let boundary = extract_boundary(mask, dem, slope_threshold)?;
    let (index, z) = boundary_index(mask, &boundary)?;
    let mut near = Vec::with_capacity(k);
    Ok(field_from_wse(mask, dem, |cell| {
        index.k_nearest(cell, k, &mut near);
        if near.len() == 1 {
            return z[near[0].1];
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(d2, si) in &near {
            let w = 1.0 / (d2 as f64).sqrt().max(1.0);
            num += w * z[si];
            den += w;
        }
        num / den
    }))
}

/// Grows flooded cells into 4-adjacent exclusion cells until none borders the flood.
pub fn expand_into_exclusion(mask: &BinaryMask, exclusion: &BinaryMask) -> Result<BinaryMask> {
    let g = *mask.geometry();
    g.ensure_same(exclusion.geometry(), "exclusion mask")?;
    let mut out = mask.clone();
    let mut frontier: Vec<usize> = out.flooded_indices().collect();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &i in &frontier {
            let (row, col) = g.row_col(i);
            for (r, c) in g.neighbors4(row, col) {
                let n = g.index(r, c);
                if exclusion.is_flooded(n) && out.code(n) == code::DRY {
                    out.set(n, code::FLOODED);
                    next.push(n);
                }
            }
        }
        frontier = next;
    }
    Ok(out)
}
