//! Two-component Gaussian mixture fit and bimodality scores.
//!
//! EM runs on the 256-bin histogram: every member of a bin shares the
//! responsibilities evaluated at the bin's sample mean, while the M-step uses the
//! exact per-bin sums and sums of squares. Cost is independent of sample size.

use super::histogram::{otsu_threshold, Histogram, HISTOGRAM_BINS};
use crate::error::{Error, Result};

pub const MIN_FIT_SAMPLES: usize = 50;
pub const EM_MAX_ITERATIONS: usize = 50;
pub const EM_TOLERANCE: f64 = 1e-6;

const SIGMA_COLLAPSE: f64 = 1e-6;
const WEIGHT_COLLAPSE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

impl GaussianComponent {
    pub fn cdf(&self, x: f64) -> f64 {
        0.5 * (1.0 + libm::erf((x - self.mean) / (self.std * std::f64::consts::SQRT_2)))
    }

    fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z - self.std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BimodalityScores {
    pub ashman_d: f64,
    pub bhattacharyya: f64,
    pub surface_ratio: f64,
}

impl BimodalityScores {
    pub const NOT_BIMODAL: BimodalityScores = BimodalityScores {
        ashman_d: 0.0,
        bhattacharyya: 0.0,
        surface_ratio: 0.0,
    };

    pub fn passes(&self, ad: f64, bc: f64, sr: f64) -> bool {
        self.ashman_d >= ad && self.bhattacharyya >= bc && self.surface_ratio >= sr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFit {
    /// Ordered by mean, darker component first.
    pub components: [GaussianComponent; 2],
    pub scores: BimodalityScores,
    pub iterations: usize,
    /// EM collapsed a component; scores are [`BimodalityScores::NOT_BIMODAL`].
    pub degenerate: bool,
}

/// Ashman's D between two Gaussians.
pub fn ashman_d(a: &GaussianComponent, b: &GaussianComponent) -> f64 {
    let pooled = (0.5 * (a.std * a.std + b.std * b.std)).sqrt();
    if pooled == 0.0 {
        return 0.0;
    }
    (a.mean - b.mean).abs() / pooled
}

/// Bhattacharyya coefficient `Σ sqrt(p_i q_i)` of two discrete distributions.
pub fn bhattacharyya(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must share support");
    p.iter()
        .zip(q)
        .map(|(&a, &b)| (a.max(0.0) * b.max(0.0)).sqrt())
        .sum::<f64>()
        .min(1.0)
}

/// Fits a two-component Gaussian mixture by EM and scores its bimodality.
pub fn fit_two_gaussians(values: &[f64]) -> Result<MixtureFit> {
    let n = values.iter().filter(|v| v.is_finite()).count();
    if n < MIN_FIT_SAMPLES {
        return Err(Error::invalid(format!(
            "mixture fit needs at least {MIN_FIT_SAMPLES} samples, got {n}"
        )));
    }
    match Histogram::build(values) {
        Ok(hist) => Ok(fit_histogram(&hist)),
        Err(e) if e.is_degenerate() => Ok(collapsed(values.iter().copied().find(|v| v.is_finite()).unwrap_or(0.0), 0)),
        Err(e) => Err(e),
    }
}

fn collapsed(mean: f64, iterations: usize) -> MixtureFit {
    let c = GaussianComponent {
        weight: 0.5,
        mean,
        std: 0.0,
    };
    MixtureFit {
        components: [c, c],
        scores: BimodalityScores::NOT_BIMODAL,
        iterations,
        degenerate: true,
    }
}

/// EM on a prebuilt histogram. Component means are in value units.
pub fn fit_histogram(hist: &Histogram) -> MixtureFit {
    let counts = hist.counts();
    let sums = hist.offset_sums();
    let sqs = hist.offset_sq_sums();
    let n = hist.total() as f64;
    let origin = hist.min();

    // Work in offsets from the histogram minimum.
    let occupied: Vec<usize> = (0..HISTOGRAM_BINS).filter(|&b| counts[b] > 0).collect();
    let centers: Vec<f64> = occupied.iter().map(|&b| sums[b] / counts[b] as f64).collect();

    let floor_std = hist.bin_width() * 0.5;
    let mut comps = match otsu_threshold(hist) {
        Ok(split) => [
            GaussianComponent {
                weight: split.weight_f,
                mean: split.mean_f - origin,
                std: split.std_f.max(floor_std),
            },
            GaussianComponent {
                weight: split.weight_b,
                mean: split.mean_b - origin,
                std: split.std_b.max(floor_std),
            },
        ],
        Err(_) => return collapsed(origin + centers[0], 0),
    };

    let mut resp = vec![0.0f64; occupied.len()];
    let mut previous_ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    while iterations < EM_MAX_ITERATIONS {
        iterations += 1;
        // E-step: responsibility of component 0 per occupied bin.
        let mut ll = 0.0;
        for (k, &x) in centers.iter().enumerate() {
            let a = comps[0].weight.ln() + comps[0].log_density(x);
            let b = comps[1].weight.ln() + comps[1].log_density(x);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            resp[k] = (a - lse).exp();
            ll += counts[occupied[k]] as f64 * lse;
        }
        ll /= n;

        // M-step with exact within-bin moments.
        let mut acc = [[0.0f64; 3]; 2];
        for (k, &b) in occupied.iter().enumerate() {
            let r = [resp[k], 1.0 - resp[k]];
            for j in 0..2 {
                acc[j][0] += r[j] * counts[b] as f64;
                acc[j][1] += r[j] * sums[b];
                acc[j][2] += r[j] * sqs[b];
            }
        }
        for j in 0..2 {
            let [w, s, q] = acc[j];
            if w / n < WEIGHT_COLLAPSE {
                return collapsed(origin + comps[1 - j].mean, iterations);
            }
            let mean = s / w;
            let var = (q / w - mean * mean).max(0.0);
            if var.sqrt() < SIGMA_COLLAPSE {
                return collapsed(origin + mean, iterations);
            }
            comps[j] = GaussianComponent {
                weight: w / n,
                mean,
                std: var.sqrt(),
            };
        }
        if (ll - previous_ll).abs() < EM_TOLERANCE {
            break;
        }
        previous_ll = ll;
    }

    if comps[0].mean > comps[1].mean {
        comps.swap(0, 1);
    }

    // Hard assignment by maximum responsibility for the surface ratio.
    let mut class_counts = [0u64; 2];
    for (k, &x) in centers.iter().enumerate() {
        let a = comps[0].weight.ln() + comps[0].log_density(x);
        let b = comps[1].weight.ln() + comps[1].log_density(x);
        class_counts[usize::from(b > a)] += counts[occupied[k]];
    }
    let (small, large) = (
        class_counts[0].min(class_counts[1]),
        class_counts[0].max(class_counts[1]),
    );
    let surface_ratio = small as f64 / large as f64;

    // Fitted mixture mass per bin versus the empirical histogram.
    let pmf = hist.pmf();
    let mut fitted = Vec::with_capacity(HISTOGRAM_BINS);
    let mixture_cdf = |x: f64| comps[0].weight * comps[0].cdf(x) + comps[1].weight * comps[1].cdf(x);
    let width = hist.bin_width();
    let mut lower = mixture_cdf(0.0);
    for b in 0..HISTOGRAM_BINS {
        let upper = mixture_cdf((b + 1) as f64 * width);
        fitted.push(upper - lower);
        lower = upper;
    }

    let components = comps.map(|c| GaussianComponent {
        mean: c.mean + origin,
        ..c
    });
    MixtureFit {
        scores: BimodalityScores {
            ashman_d: ashman_d(&components[0], &components[1]),
            bhattacharyya: bhattacharyya(&fitted, &pmf),
            surface_ratio,
        },
        components,
        iterations,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn mixture(seed: u64, parts: &[(f64, f64, usize)]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for &(mu, sigma, n) in parts {
            let d = Normal::new(mu, sigma).unwrap();
            out.extend((0..n).map(|_| d.sample(&mut rng)));
        }
        out
    }

    #[test]
    fn ashman_d_analytic() {
        let a = GaussianComponent {
            weight: 0.5,
            mean: 0.0,
            std: 1.0,
        };
        let b = GaussianComponent { mean: 2.0, ..a };
        assert_eq!(ashman_d(&a, &b), 2.0);
    }

    #[test]
    fn recovers_equal_mixture() {
        let values = mixture(11, &[(0.0, 1.0, 20_000), (2.0, 1.0, 20_000)]);
        let fit = fit_two_gaussians(&values).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.scores.ashman_d - 2.0).abs() <= 0.1, "{:?}", fit);
        assert!(fit.scores.bhattacharyya > 0.99);
    }

    #[test]
    fn bhattacharyya_of_identical_is_one() {
        let p: Vec<f64> = (0..10).map(|i| (i + 1) as f64 / 55.0).collect();
        assert!((bhattacharyya(&p, &p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn surface_ratio_of_unbalanced_mixture() {
        let values = mixture(12, &[(-18.0, 1.0, 9_000), (-8.0, 1.0, 1_000)]);
        let fit = fit_two_gaussians(&values).unwrap();
        assert!((fit.scores.surface_ratio - 0.10).abs() <= 0.02, "{:?}", fit.scores);
        assert!(fit.components[0].mean < fit.components[1].mean);
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(fit_two_gaussians(&[1.0; 49]).is_err());
    }

    #[test]
    fn constant_sample_is_not_bimodal() {
        let fit = fit_two_gaussians(&[4.0; 100]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.scores, BimodalityScores::NOT_BIMODAL);
    }
}
