//! Mask clean-up: hole filling and small-patch removal.

use std::fmt;

use crate::error::{Error, Result};
use crate::raster::{code, connected_components, label_cells, BinaryMask, Connectivity};

pub const MORPHOLOGY_AREAS: [usize; 3] = [10, 50, 100];

/// Post-processing step sizes in pixels. Fill runs before removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MorphologyConfig {
    pub enabled: bool,
    pub fill_holes_max: usize,
    pub remove_patches_max: usize,
}

impl MorphologyConfig {
    pub const DISABLED: MorphologyConfig = MorphologyConfig {
        enabled: false,
        fill_holes_max: 0,
        remove_patches_max: 0,
    };

    pub fn new(fill_holes_max: usize, remove_patches_max: usize) -> Result<Self> {
        if fill_holes_max == 0 || remove_patches_max == 0 {
            return Err(Error::invalid("morphology sizes must be positive"));
        }
        Ok(MorphologyConfig {
            enabled: true,
            fill_holes_max,
            remove_patches_max,
        })
    }

    /// `off` or `fill=<n>;remove=<m>`.
    pub fn params(&self) -> String {
        if self.enabled {
            format!("fill={};remove={}", self.fill_holes_max, self.remove_patches_max)
        } else {
            "off".to_string()
        }
    }

    pub fn apply(&self, mask: &BinaryMask) -> BinaryMask {
        if !self.enabled {
            return mask.clone();
        }
        remove_patches(&fill_holes(mask, self.fill_holes_max), self.remove_patches_max)
    }
}

impl Default for MorphologyConfig {
    fn default() -> Self {
        Self::DISABLED
    }
}

impl fmt::Display for MorphologyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.params())
    }
}

/// The 9 enabled combinations of fill and removal sizes.
pub fn morphology_grid() -> Vec<MorphologyConfig> {
    let mut out = Vec::with_capacity(9);
    for &fill in &MORPHOLOGY_AREAS {
        for &remove in &MORPHOLOGY_AREAS {
            out.push(MorphologyConfig::new(fill, remove).expect("positive sizes"));
        }
    }
    out
}

/// Floods dry 4-connected components of at most `max_area` cells that do not
/// touch the raster border.
pub fn fill_holes(mask: &BinaryMask, max_area: usize) -> BinaryMask {
    let g = *mask.geometry();
    let labels = label_cells(&g, |i| mask.is_dry(i), Connectivity::Four);
    let mut exterior = vec![false; labels.count() + 1];
    for row in 0..g.height {
        for col in 0..g.width {
            if row == 0 || col == 0 || row + 1 == g.height || col + 1 == g.width {
                exterior[labels.label(g.index(row, col)) as usize] = true;
            }
        }
    }
    let mut out = mask.clone();
    for i in 0..g.len() {
        let l = labels.label(i);
        if l != 0 && !exterior[l as usize] && labels.size(l) <= max_area {
            out.set(i, code::FLOODED);
        }
    }
    out
}

/// Dries flooded 8-connected components of at most `max_area` cells.
pub fn remove_patches(mask: &BinaryMask, max_area: usize) -> BinaryMask {
    let labels = connected_components(mask, Connectivity::Eight);
    let mut out = mask.clone();
    for i in 0..mask.geometry().len() {
        let l = labels.label(i);
        if l != 0 && labels.size(l) <= max_area {
            out.set(i, code::DRY);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Geometry;

    fn square_with_hole(side: usize, hole: usize) -> BinaryMask {
        let g = Geometry::new(side + 4, side + 4, 1.0).unwrap();
        let lo = 2 + (side - hole) / 2;
        BinaryMask::from_fn(g, |r, c| {
            let in_square = (2..2 + side).contains(&r) && (2..2 + side).contains(&c);
            let in_hole = (lo..lo + hole).contains(&r) && (lo..lo + hole).contains(&c);
            if in_square && !in_hole {
                code::FLOODED
            } else {
                code::DRY
            }
        })
        .unwrap()
    }

    #[test]
    fn small_hole_filled_large_kept() {
        let donut = square_with_hole(5, 1);
        let filled = fill_holes(&donut, 10);
        assert_eq!(filled.flooded_count(), 25);
        assert_eq!(fill_holes(&filled, 10), filled);

        let big = square_with_hole(20, 14);
        assert_eq!(fill_holes(&big, 100), big);
    }

    #[test]
    fn isolated_pixel_removed_body_kept() {
        let g = Geometry::new(120, 120, 1.0).unwrap();
        let m = BinaryMask::from_fn(g, |r, c| {
            if (r < 100 && c < 100) || (r == 110 && c == 110) {
                code::FLOODED
            } else {
                code::DRY
            }
        })
        .unwrap();
        let out = remove_patches(&m, 100);
        assert_eq!(out.flooded_count(), 10_000);
        assert!(!out.is_flooded(g.index(110, 110)));
    }

    #[test]
    fn fill_then_remove() {
        // A one-pixel hole in a 3x3 block: filling makes a 9-pixel patch, which
        // removal at 9 then deletes. Reversed order would keep a filled block.
        let m = square_with_hole(3, 1);
        let cfg = MorphologyConfig::new(1, 9).unwrap();
        assert_eq!(cfg.apply(&m).flooded_count(), 0);
        let reversed = fill_holes(&remove_patches(&m, 9), 1);
        assert_eq!(reversed.flooded_count(), 0);
        let cfg = MorphologyConfig::new(1, 8).unwrap();
        assert_eq!(cfg.apply(&m).flooded_count(), 9);
        assert_eq!(fill_holes(&remove_patches(&m, 8), 1).flooded_count(), 0);
    }

    #[test]
    fn grid_has_nine_points() {
        assert_eq!(morphology_grid().len(), 9);
        assert_eq!(MorphologyConfig::DISABLED.params(), "off");
    }
}
