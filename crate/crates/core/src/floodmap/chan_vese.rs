//! Two-phase Chan–Vese segmentation with a discrete perimeter term.
//!
//! Energy of a labeling `u` with region means `c1` (inside, flooded) and `c2`:
//!
//! ```text
//! E = α·#{8-adjacent pairs with different labels} + ν·|inside|
//!   + λ1 Σ_inside (x − c1)² + λ2 Σ_outside (x − c2)²
//! ```
//!
//! Each iteration recomputes `c1, c2` as region means, then sweeps the grid
//! flipping any pixel whose flip strictly lowers `E` with the means held fixed.
//! Sweep direction alternates so fronts advance quickly both ways. Both steps
//! are non-increasing in `E`. Values are used as given (dB), without rescaling.

use crate::error::{Error, Result};
use crate::raster::{code, BinaryMask, Raster};

pub const ACTIVE_CONTOUR_ALPHA: [f64; 6] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChanVeseParams {
    pub alpha: f64,
    pub nu: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iterations: usize,
    /// Stop once fewer than this fraction of valid pixels change class.
    pub tolerance: f64,
}

impl ChanVeseParams {
    pub fn with_alpha(alpha: f64) -> Self {
        ChanVeseParams {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.lambda1 > self.lambda2 && self.lambda2 > 0.0) {
            return Err(Error::invalid("need lambda1 > lambda2 > 0"));
        }
        if !(self.tolerance >= 0.0) || self.max_iterations == 0 {
            return Err(Error::invalid("bad iteration controls"));
        }
        Ok(())
    }
}

impl Default for ChanVeseParams {
    fn default() -> Self {
        ChanVeseParams {
            alpha: 0.1,
            nu: 0.0,
            lambda1: 2.0,
            lambda2: 1.0,
            max_iterations: 500,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChanVeseOutcome {
    pub mask: BinaryMask,
    pub iterations: usize,
    /// Energy after each iteration's sweep.
    pub energy: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    /// Constant image or a region emptied out; `mask` is then the last valid labeling.
    pub degenerate: bool,
}

/// Region means `(c1, c2)` of flooded and dry valid cells.
pub fn region_means(raster: &Raster, mask: &BinaryMask) -> (Option<f64>, Option<f64>) {
    let mut acc = [(0.0f64, 0usize); 2];
    for (i, &c) in mask.codes().iter().enumerate() {
        if c == code::NODATA {
            continue;
        }
        if let Some(v) = raster.get(i) {
            let slot = &mut acc[usize::from(c == code::FLOODED)];
            slot.0 += f64::from(v);
            slot.1 += 1;
        }
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    (mean(acc[1]), mean(acc[0]))
}

/// Discrete energy of `mask` for fixed region means.
pub fn chan_vese_energy(raster: &Raster, mask: &BinaryMask, params: &ChanVeseParams, c1: f64, c2: f64) -> f64 {
    let g = raster.geometry();
    let mut disagreements = 0usize;
    let mut data = 0.0;
    for row in 0..g.height {
        for col in 0..g.width {
            let i = g.index(row, col);
            let label = mask.code(i);
            if label == code::NODATA {
                continue;
            }
            let x = f64::from(raster.values()[i]);
            data += if label == code::FLOODED {
                params.lambda1 * (x - c1).powi(2) + params.nu
            } else {
                params.lambda2 * (x - c2).powi(2)
            };
            // Count each pair once via forward neighbors.
            for (dr, dc) in [(0isize, 1isize), (1, -1), (1, 0), (1, 1)] {
                let (nr, nc) = (row as isize + dr, col as isize + dc);
                if nr < 0 || nc < 0 || nr as usize >= g.height || nc as usize >= g.width {
                    continue;
                }
                let other = mask.code(g.index(nr as usize, nc as usize));
                if other != code::NODATA && other != label {
                    disagreements += 1;
                }
            }
        }
    }
    params.alpha * disagreements as f64 + data
}

/// Segments `raster_db` starting from `init`. Cells that are nodata in either
/// input are nodata in the output.
pub fn chan_vese_map(raster_db: &Raster, init: &BinaryMask, params: &ChanVeseParams) -> Result<ChanVeseOutcome> {
    params.validate()?;
    let g = *raster_db.geometry();
    g.ensure_same(init.geometry(), "initial contour")?;

    let codes: Vec<u8> = (0..g.len())
        .map(|i| match raster_db.get(i) {
            None => code::NODATA,
            Some(_) if init.is_nodata(i) => code::NODATA,
            Some(_) => init.code(i),
        })
        .collect();
    let mut mask = BinaryMask::new(g, codes)?;
    let valid = mask.flooded_count() + mask.dry_count();
    if mask.flooded_count() == 0 || mask.dry_count() == 0 {
        return Err(Error::invalid("initial contour must be neither empty nor full"));
    }

    let (lo, hi) = raster_db.min_max().expect("valid cells exist");
    let (c1, c2) = region_means(raster_db, &mask);
    let (mut c1, mut c2) = (c1.unwrap(), c2.unwrap());
    if lo == hi {
        return Ok(ChanVeseOutcome {
            mask,
            iterations: 0,
            energy: Vec::new(),
            c1,
            c2,
            degenerate: true,
        });
    }

    let values = raster_db.values();
    let mut energy = Vec::new();
    let mut iterations = 0;
    let mut degenerate = false;
    while iterations < params.max_iterations {
        let (m1, m2) = region_means(raster_db, &mask);
        let (Some(m1), Some(m2)) = (m1, m2) else {
            degenerate = true;
            break;
        };
        (c1, c2) = (m1, m2);
        if c1 > c2 {
            // Keep the flooded phase the darker one.
            for i in 0..g.len() {
                match mask.code(i) {
                    code::FLOODED => mask.set(i, code::DRY),
                    code::DRY => mask.set(i, code::FLOODED),
                    _ => {}
                }
            }
            std::mem::swap(&mut c1, &mut c2);
        }

        let forward = iterations % 2 == 0;
        let mut changed = 0usize;
        for step in 0..g.len() {
            let i = if forward { step } else { g.len() - 1 - step };
            let label = mask.code(i);
            if label == code::NODATA {
                continue;
            }
            let x = f64::from(values[i]);
            let inside_cost = params.lambda1 * (x - c1).powi(2) + params.nu;
            let outside_cost = params.lambda2 * (x - c2).powi(2);
            let (row, col) = g.row_col(i);
            let (mut same, mut other) = (0i32, 0i32);
            for (nr, nc) in g.neighbors8(row, col) {
                match mask.code(g.index(nr, nc)) {
                    code::NODATA => {}
                    n if n == label => same += 1,
                    _ => other += 1,
                }
            }
            // Flipping turns `same` agreements into disagreements and vice versa.
            let smooth_delta = params.alpha * f64::from(same - other);
            let data_delta = if label == code::FLOODED {
                outside_cost - inside_cost
            } else {
                inside_cost - outside_cost
            };
            if data_delta + smooth_delta < 0.0 {
                mask.set(i, if label == code::FLOODED { code::DRY } else { code::FLOODED });
                changed += 1;
            }
        }
        iterations += 1;
        energy.push(chan_vese_energy(raster_db, &mask, params, c1, c2));
        if mask.flooded_count() == 0 || mask.dry_count() == 0 {
            degenerate = true;
            break;
        }
        if (changed as f64) < params.tolerance * valid as f64 {
            break;
        }
    }

    Ok(ChanVeseOutcome {
        mask,
        iterations,
        energy,
        c1,
        c2,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Geometry;

    fn two_region(width: usize, height: usize, split_col: usize) -> Raster {
        let g = Geometry::new(width, height, 1.0).unwrap();
        Raster::from_fn(g, |_, col| Some(if col < split_col { -18.0 } else { -8.0 }))
    }

    fn seed(g: Geometry, cols: usize) -> BinaryMask {
        BinaryMask::from_fn(g, |_, col| if col < cols { code::FLOODED } else { code::DRY }).unwrap()
    }

    #[test]
    fn converges_to_region_boundary() {
        let r = two_region(40, 30, 17);
        let out = chan_vese_map(&r, &seed(*r.geometry(), 3), &ChanVeseParams::with_alpha(0.2)).unwrap();
        assert!(!out.degenerate);
        for i in 0..r.geometry().len() {
            let (_, col) = r.geometry().row_col(i);
            assert_eq!(out.mask.is_flooded(i), col < 17);
        }
    }

    #[test]
    fn zero_alpha_is_nearest_mean_classification() {
        let g = Geometry::new(7, 5, 1.0).unwrap();
        let r = Raster::from_fn(g, |row, col| Some(((row * 7 + col) % 5) as f64 * 3.0 - 15.0));
        let init = seed(g, 3);
        let out = chan_vese_map(&r, &init, &ChanVeseParams::with_alpha(0.0)).unwrap();
        let (c1, c2) = (out.c1, out.c2);
        for i in 0..g.len() {
            let x = f64::from(r.values()[i]);
            let inside = 2.0 * (x - c1).powi(2) < (x - c2).powi(2);
            let boundary = 2.0 * (x - c1).powi(2) == (x - c2).powi(2);
            if !boundary {
                assert_eq!(out.mask.is_flooded(i), inside, "cell {i}");
            }
        }
    }

    #[test]
    fn constant_image_returns_init_flagged() {
        let g = Geometry::new(6, 6, 1.0).unwrap();
        let r = Raster::filled(g, -12.0);
        let init = seed(g, 2);
        let out = chan_vese_map(&r, &init, &ChanVeseParams::default()).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.mask, init);
    }

    #[test]
    fn empty_or_full_init_rejected() {
        let r = two_region(5, 5, 2);
        let g = *r.geometry();
        assert!(chan_vese_map(&r, &BinaryMask::filled(g, code::DRY), &ChanVeseParams::default()).is_err());
        assert!(chan_vese_map(&r, &BinaryMask::filled(g, code::FLOODED), &ChanVeseParams::default()).is_err());
    }

    #[test]
    fn lambda_order_enforced() {
        let p = ChanVeseParams {
            lambda1: 1.0,
            lambda2: 2.0,
            ..ChanVeseParams::default()
        };
        assert!(p.validate().is_err());
    }
}
