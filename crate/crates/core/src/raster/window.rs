//! Moving-window helpers with reflect padding.

use super::Raster;

/// Half-sample symmetric reflection: `-1 -> 0`, `-2 -> 1`, `n -> n - 1`.
///
/// Valid for any `n >= 1` and any offset, folding repeatedly if needed.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// A `(2k+1) x (2k+1)` window centered on a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridWindow {
    pub row: usize,
    pub col: usize,
    pub half: usize,
}

impl GridWindow {
    pub fn new(row: usize, col: usize, half: usize) -> Self {
        GridWindow { row, col, half }
    }

    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    /// Visits every window member as `(row_offset, col_offset, value)`,
    /// skipping nodata members. Offsets run row-major from `(-k, -k)`.
    #[inline]
    pub fn for_each_valid(&self, raster: &Raster, mut f: impl FnMut(isize, isize, f32)) {
        let g = raster.geometry();
        let k = self.half as isize;
        let values = raster.values();
        for dr in -k..=k {
            let r = reflect_index(self.row as isize + dr, g.height);
            let base = r * g.width;
            for dc in -k..=k {
                let c = reflect_index(self.col as isize + dc, g.width);
                let v = values[base + c];
                if !raster.is_nodata_value(v) {
                    f(dr, dc, v);
                }
            }
        }
    }

    /// Collects valid member values into `buf` (cleared first).
    #[inline]
    pub fn collect_valid(&self, raster: &Raster, buf: &mut Vec<f32>) {
        buf.clear();
        self.for_each_valid(raster, |_, _, v| buf.push(v));
    }
}

/// Per-cell window mean and population variance over valid members.
///
/// Output cells are nodata where the center cell is nodata.
pub fn local_stats(raster: &Raster, half: usize) -> (Raster, Raster) {
    let g = *raster.geometry();
    let mut mean = Vec::with_capacity(g.len());
    let mut var = Vec::with_capacity(g.len());
    for row in 0..g.height {
        for col in 0..g.width {
            if raster.at(row, col).is_none() {
                mean.push(raster.nodata());
                var.push(raster.nodata());
                continue;
            }
            let (m, v) = window_moments(raster, GridWindow::new(row, col, half));
            mean.push(m as f32);
            var.push(v as f32);
        }
    }
    (
        raster.with_values(mean).expect("geometry preserved"),
        raster.with_values(var).expect("geometry preserved"),
    )
}

/// Mean and population variance of the valid members of one window, in f64.
#[inline]
pub(crate) fn window_moments(raster: &Raster, window: GridWindow) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0f64;
    window.for_each_valid(raster, |_, _, v| {
        n += 1;
        sum += v as f64;
    });
    let mean = sum / n as f64;
    let mut ss = 0f64;
    window.for_each_valid(raster, |_, _, v| {
        let d = v as f64 - mean;
        ss += d * d;
    });
    (mean, ss / n as f64)
}
