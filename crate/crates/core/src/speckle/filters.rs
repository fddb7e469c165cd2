use super::SpeckleModel;
use crate::error::{Error, Result};
use crate::raster::window::window_moments;
use crate::raster::{BinaryMask, GridWindow, Raster};

/// Applies `f` to every valid cell's window; nodata centers stay nodata.
fn filter_windows(
    raster: &Raster,
    half: usize,
    mut f: impl FnMut(GridWindow, f32) -> Option<f64>,
) -> Raster {
    let g = *raster.geometry();
    let mut out = Vec::with_capacity(g.len());
    for row in 0..g.height {
        for col in 0..g.width {
            let value = match raster.at(row, col) {
                Some(center) => match f(GridWindow::new(row, col, half), center) {
                    Some(v) if v.is_finite() => v as f32,
                    _ => raster.nodata(),
                },
                None => raster.nodata(),
            };
            out.push(value);
        }
    }
    raster.with_values(out).expect("geometry preserved")
}

/// Median of each reflected `(2k+1)^2` window. An even number of valid members
/// (only possible next to nodata) gives the mean of the two central values.
pub fn median_filter(raster: &Raster, half: usize) -> Raster {
    let mut buf = Vec::with_capacity((2 * half + 1).pow(2));
    filter_windows(raster, half, |w, _| {
        w.collect_valid(raster, &mut buf);
        median_of(&mut buf)
    })
}

pub(crate) fn median_of(values: &mut [f32]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    values.sort_unstable_by(f32::total_cmp);
    Some(if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    })
}

/// Minimum-mean-square-error Lee filter.
///
/// Per window: `R̄ = Ī`, `Var(R) = max(0, Var(I) - Ī² Var(S)) / (Var(S) + S̄²)`,
/// `R̂ = R̄ + Var(R) / Var(I) * (I - S̄ R̄)`. Flat windows return `Ī`.
pub fn lee_filter(raster: &Raster, half: usize, model: &SpeckleModel) -> Raster {
    let var_s = model.variance();
    let mean_s = model.mean();
    filter_windows(raster, half, |w, center| {
        let (mean_i, var_i) = window_moments(raster, w);
        if var_i <= 0.0 {
            return Some(mean_i);
        }
        let var_r = (var_i - mean_i * mean_i * var_s).max(0.0) / (var_s + mean_s * mean_s);
        let gain = (var_r / var_i).clamp(0.0, 1.0);
        Some(mean_i + gain * (center as f64 - mean_s * mean_i))
    })
}

/// Improved Lee Sigma filter.
///
/// Each window's valid values are sorted; among all contiguous runs holding
/// `ceil(xi * n)` of them, the run whose mean is closest to the full-window
/// mean is selected and its mean returned. Ties prefer a run covering the
/// center value's rank, then the lowest run.
pub fn lee_sigma_filter(raster: &Raster, half: usize, xi: f64) -> Raster {
    let mut buf = Vec::with_capacity((2 * half + 1).pow(2));
    let mut prefix = Vec::with_capacity(buf.capacity() + 1);
    filter_windows(raster, half, |w, center| {
        w.collect_valid(raster, &mut buf);
        sigma_interval_mean(&mut buf, center, xi, &mut prefix)
    })
}

pub(crate) fn sigma_interval_mean(
    values: &mut [f32],
    center: f32,
    xi: f64,
    prefix: &mut Vec<f64>,
) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    values.sort_unstable_by(f32::total_cmp);
    prefix.clear();
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in values.iter() {
        acc += v as f64;
        prefix.push(acc);
    }
    let total_mean = acc / n as f64;
    let run = ((xi * n as f64 - 1e-9).ceil() as usize).clamp(1, n);

    // Rank span of the center value among the sorted members.
    let lo_rank = values.partition_point(|&v| v < center);
    let hi_rank = values.partition_point(|&v| v <= center).max(lo_rank + 1) - 1;

    let mut best: Option<(f64, bool, usize)> = None;
    for start in 0..=(n - run) {
        let mean = (prefix[start + run] - prefix[start]) / run as f64;
        let cost = (mean - total_mean).abs();
        let covers_center = start <= hi_rank && start + run > lo_rank;
        let better = match best {
            None => true,
            Some((best_cost, best_covers, _)) => {
                cost < best_cost || (cost == best_cost && covers_center && !best_covers)
            }
        };
        if better {
            best = Some((cost, covers_center, start));
        }
    }
    let (_, _, start) = best?;
    Some((prefix[start + run] - prefix[start]) / run as f64)
}

/// Frost filter with pure exponential-distance weights `exp(-alpha * d)`,
/// normalized over the valid window members.
pub fn frost_filter(raster: &Raster, half: usize, alpha: f64) -> Raster {
    let side = 2 * half + 1;
    let k = half as isize;
    let kernel: Vec<f64> = (-k..=k)
        .flat_map(|dr| (-k..=k).map(move |dc| ((dr * dr + dc * dc) as f64).sqrt()))
        .map(|d| (-alpha * d).exp())
        .collect();
    filter_windows(raster, half, |w, _| {
        let mut num = 0.0;
        let mut den = 0.0;
        w.for_each_valid(raster, |dr, dc, v| {
            let weight = kernel[((dr + k) as usize) * side + (dc + k) as usize];
            num += weight * v as f64;
            den += weight;
        });
        (den > 0.0).then(|| num / den)
    })
}

/// Equivalent number of looks, `mean² / variance`, over the flooded cells of
/// `region` (population variance).
pub fn enl(raster: &Raster, region: &BinaryMask) -> Result<f64> {
    raster
        .geometry()
        .ensure_same(region.geometry(), "ENL region")?;
    let samples: Vec<f64> = region
        .flooded_indices()
        .filter_map(|i| raster.get(i))
        .map(f64::from)
        .collect();
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "ENL region needs at least 2 valid pixels, has {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::degenerate("degenerate homogeneous region"));
    }
    Ok(mean * mean / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{code, Geometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raster(w: usize, h: usize, seed: u64) -> Raster {
        let g = Geometry::new(w, h, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(g, |_, _| Some(rng.random_range(0.0..10.0)))
    }

    /// Window members gathered by explicit reflection arithmetic, independent
    /// of `GridWindow`.
    fn oracle_window(r: &Raster, row: usize, col: usize, k: isize) -> Vec<f64> {
        let (h, w) = (r.height() as isize, r.width() as isize);
        let refl = |i: isize, n: isize| if i < 0 { -i - 1 } else if i >= n { 2 * n - i - 1 } else { i };
        let mut out = Vec::new();
        for dr in -k..=k {
            for dc in -k..=k {
                let rr = refl(row as isize + dr, h) as usize;
                let cc = refl(col as isize + dc, w) as usize;
                out.push(r.at(rr, cc).unwrap() as f64);
            }
        }
        out
    }

    #[test]
    fn constant_raster_is_fixed_point_of_every_filter() {
        let g = Geometry::new(11, 9, 1.0).unwrap();
        let r = Raster::filled(g, 0.37);
        let model = SpeckleModel::new(4.0).unwrap();
        for k in 1..=3 {
            assert_eq!(median_filter(&r, k), r);
            assert_eq!(lee_filter(&r, k, &model), r);
            assert_eq!(lee_sigma_filter(&r, k, 0.8), r);
            assert_eq!(frost_filter(&r, k, 2.0), r);
        }
    }

    #[test]
    fn median_rejects_outlier() {
        let g = Geometry::new(3, 3, 1.0).unwrap();
        let mut v = vec![1.0; 9];
        v[4] = 100.0;
        let r = Raster::new(g, -1.0, v).unwrap();
        assert_eq!(median_filter(&r, 1).at(1, 1), Some(1.0));
    }

    #[test]
    fn median_matches_full_sort_oracle() {
        let r = random_raster(20, 20, 7);
        let out = median_filter(&r, 2);
        for row in 0..20 {
            for col in 0..20 {
                let mut s = oracle_window(&r, row, col, 2);
                s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(out.at(row, col).unwrap() as f64, s[12] as f32 as f64);
            }
        }
    }

    #[test]
    fn median_even_count_takes_central_mean() {
        let mut vals = vec![4.0f32, 1.0];
        assert_eq!(median_of(&mut vals), Some(2.5));
        assert_eq!(median_of(&mut []), None);
    }

    #[test]
    fn lee_without_speckle_is_identity() {
        let r = random_raster(25, 18, 2);
        for k in 1..=3 {
            assert_eq!(lee_filter(&r, k, &SpeckleModel::noiseless()), r);
        }
    }

    #[test]
    fn lee_output_is_non_negative() {
        let r = random_raster(30, 30, 9);
        let out = lee_filter(&r, 2, &SpeckleModel::new(1.0).unwrap());
        assert!(out.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn lee_sigma_full_interval_is_window_mean() {
        let r = random_raster(12, 12, 4);
        let out = lee_sigma_filter(&r, 1, 1.0);
        for row in 0..12 {
            for col in 0..12 {
                let s = oracle_window(&r, row, col, 1);
                let mean = s.iter().sum::<f64>() / s.len() as f64;
                assert!((out.at(row, col).unwrap() as f64 - mean).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn lee_sigma_matches_exhaustive_interval_oracle() {
        let g = Geometry::new(5, 5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut vals: Vec<f32> = (0..25).map(|_| rng.random_range(1.0..2.0)).collect();
        vals[7] = 250.0;
        let r = Raster::new(g, -1.0, vals).unwrap();
        let out = lee_sigma_filter(&r, 2, 0.8);
        let run = 20;
        for row in 0..5 {
            for col in 0..5 {
                let mut s = oracle_window(&r, row, col, 2);
                s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let full = s.iter().sum::<f64>() / 25.0;
                let expect = (0..=25 - run)
                    .map(|st| s[st..st + run].iter().sum::<f64>() / run as f64)
                    .min_by(|a, b| (a - full).abs().partial_cmp(&(b - full).abs()).unwrap())
                    .unwrap();
                let got = out.at(row, col).unwrap() as f64;
                assert!((got - expect).abs() < 1e-4, "({row},{col}) {got} vs {expect}");
            }
        }
    }

    #[test]
    fn frost_matches_direct_kernel_sum() {
        let r = random_raster(9, 9, 13);
        let out = frost_filter(&r, 1, 1.0);
        for &(row, col) in &[(4usize, 4usize), (0, 0), (8, 3)] {
            let s = oracle_window(&r, row, col, 1);
            let mut num = 0.0;
            let mut den = 0.0;
            let mut i = 0;
            for dr in -1i32..=1 {
                for dc in -1i32..=1 {
                    let w = (-((dr * dr + dc * dc) as f64).sqrt()).exp();
                    num += w * s[i];
                    den += w;
                    i += 1;
                }
            }
            assert!((out.at(row, col).unwrap() as f64 - num / den).abs() < 1e-5);
        }
    }

    #[test]
    fn frost_large_damping_approaches_identity() {
        let r = random_raster(16, 16, 8);
        let out = frost_filter(&r, 2, 50.0);
        for (a, b) in out.values().iter().zip(r.values()) {
            assert!(((a - b) / b).abs() < 1e-3);
        }
    }

    #[test]
    fn nodata_placement_preserved() {
        let g = Geometry::new(4, 4, 1.0).unwrap();
        let mut v = vec![2.0f32; 16];
        v[5] = -1.0;
        v[10] = 3.0;
        let r = Raster::new(g, -1.0, v).unwrap();
        let model = SpeckleModel::default();
        for out in [
            median_filter(&r, 1),
            lee_filter(&r, 1, &model),
            lee_sigma_filter(&r, 1, 0.7),
            frost_filter(&r, 1, 1.0),
        ] {
            assert_eq!(out.at(1, 1), None);
            assert_eq!(out.values().iter().filter(|&&x| x == -1.0).count(), 1);
        }
    }

    #[test]
    fn enl_arithmetic_and_errors() {
        let g = Geometry::new(2, 1, 1.0).unwrap();
        let r = Raster::new(g, -1.0, vec![1.0, 3.0]).unwrap();
        let all = BinaryMask::filled(g, code::FLOODED);
        assert_eq!(enl(&r, &all).unwrap(), 4.0);

        let flat = Raster::filled(g, 2.0);
        assert!(enl(&flat, &all).unwrap_err().is_degenerate());
        let none = BinaryMask::filled(g, code::DRY);
        assert!(enl(&r, &none).is_err());
    }
}
