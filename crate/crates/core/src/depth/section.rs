//! Cross-section water levels from the flood banks.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Cell, Geometry, Raster};

/// Polyline in map coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub vertices: Vec<(f64, f64)>,
}

impl CrossSection {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::invalid("cross-section needs at least two vertices"));
        }
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::invalid("non-finite cross-section vertex"));
        }
        Ok(CrossSection { vertices })
    }

    /// Cells crossed by the polyline, in order, 4-connected, without repeats of
    /// consecutive cells. Every vertex must fall on the grid.
    pub fn sample_chain(&self, geometry: &Geometry) -> Result<Vec<Cell>> {
        let mut chain: Vec<Cell> = Vec::new();
        for pair in self.vertices.windows(2) {
            for cell in traverse(geometry, pair[0], pair[1])? {
                if chain.last() != Some(&cell) {
                    chain.push(cell);
                }
            }
        }
        Ok(chain)
    }
}

/// Grid traversal of one segment (Amanatides–Woo). Diagonal corner crossings
/// step columns first so the chain stays 4-connected.
fn traverse(g: &Geometry, a: (f64, f64), b: (f64, f64)) -> Result<Vec<Cell>> {
    let outside = |p: (f64, f64)| Error::invalid(format!("cross-section vertex ({}, {}) outside the raster", p.0, p.1));
    let start = g.locate(a.0, a.1).ok_or_else(|| outside(a))?;
    let end = g.locate(b.0, b.1).ok_or_else(|| outside(b))?;
    let top = g.origin_y + g.height as f64 * g.cell_size;
    // Continuous grid coordinates: u along columns, v along rows.
    let to_uv = |p: (f64, f64)| ((p.0 - g.origin_x) / g.cell_size, (top - p.1) / g.cell_size);
    let (u0, v0) = to_uv(a);
    let (u1, v1) = to_uv(b);
    let (du, dv) = (u1 - u0, v1 - v0);

    let axis = |pos: f64, delta: f64, cell: usize| -> (isize, f64, f64) {
        if delta > 0.0 {
            (1, ((cell as f64 + 1.0) - pos) / delta, 1.0 / delta)
        } else if delta < 0.0 {
            (-1, (pos - cell as f64) / -delta, -1.0 / delta)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_c, mut t_c, dt_c) = axis(u0, du, start.1);
    let (step_r, mut t_r, dt_r) = axis(v0, dv, start.0);

    let (mut row, mut col) = (start.0 as isize, start.1 as isize);
    let mut out = vec![start];
    let limit = start.0.abs_diff(end.0) + start.1.abs_diff(end.1);
    while out.len() <= limit {
        let col_done = col == end.1 as isize;
        let row_done = row == end.0 as isize;
        if !col_done && (row_done || t_c <= t_r) {
            col += step_c;
            t_c += dt_c;
        } else {
            row += step_r;
            t_r += dt_r;
        }
        out.push((row as usize, col as usize));
    }
    debug_assert_eq!(out.last(), Some(&end));
    Ok(out)
}

/// Bank cells, level and per-cell depth along one section.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionProfile {
    pub chain: Vec<Cell>,
    pub left_bank: Cell,
    pub right_bank: Cell,
    pub wse: f64,
    /// Depth per chain cell, `None` off-flood.
    pub depths: Vec<Option<f64>>,
}

/// Level = mean elevation of the outermost flooded cells from either end.
pub fn cross_section_depth(mask: &BinaryMask, dem: &Raster, section: &CrossSection) -> Result<SectionProfile> {
    let g = *mask.geometry();
    g.ensure_same(dem.geometry(), "DEM")?;
    let chain = section.sample_chain(&g)?;
    let flooded = |c: &Cell| {
        let i = g.index(c.0, c.1);
        mask.is_flooded(i) && dem.get(i).is_some()
    };
    let left = chain
        .iter()
        .position(flooded)
        .ok_or_else(|| Error::degenerate("cross-section misses the flood"))?;
    let right = chain.iter().rposition(flooded).expect("left bank exists");
    if left == 0 || right + 1 == chain.len() {
        return Err(Error::degenerate("unbounded section"));
    }
    let z = |c: Cell| f64::from(dem.at(c.0, c.1).expect("bank elevation"));
    let wse = 0.5 * (z(chain[left]) + z(chain[right]));
    let depths = chain
        .iter()
        .map(|c| flooded(c).then(|| (wse - z(*c)).max(0.0)))
        .collect();
    Ok(SectionProfile {
        left_bank: chain[left],
        right_bank: chain[right],
        chain,
        wse,
        depths,
    })
}

/// One section per line as `x,y;x,y;...`. Blank lines and `#` comments are skipped.
pub fn parse_sections(text: &str) -> std::result::Result<Vec<CrossSection>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut vertices = Vec::new();
        for pair in line.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| format!("line {}: expected x,y but found {pair:?}", n + 1))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("line {}: {s:?}: {e}", n + 1))
            };
            vertices.push((parse(x)?, parse(y)?));
        }
        out.push(CrossSection::new(vertices).map_err(|e| format!("line {}: {e}", n + 1))?);
    }
    if out.is_empty() {
        return Err("no cross-sections".into());
    }
    Ok(out)
}

pub fn read_sections(path: &Path) -> Result<Vec<CrossSection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sections(&text).map_err(|m| Error::parse(path, m))
}
