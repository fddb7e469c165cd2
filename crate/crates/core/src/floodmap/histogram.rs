//! 256-bin histograms and two-class threshold selection (Otsu, Kittler–Illingworth).
//!
//! Besides counts, each bin keeps the sum and sum of squares of its members
//! (offset by the histogram minimum), so class statistics at any cut are exact
//! sample moments rather than bin-center approximations.

use std::fmt;

use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 256;

const KI_SIGMA_FLOOR: f64 = 1e-6;
const KI_WEIGHT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    min: f64,
    max: f64,
    counts: Vec<u64>,
    sums: Vec<f64>,
    sq_sums: Vec<f64>,
    total: u64,
}

impl Histogram {
    /// Uniform bins over `[min, max]` of the sample; the maximum lands in the
    /// last bin. Needs at least two distinct finite values.
    pub fn build(values: &[f64]) -> Result<Histogram> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(hi > lo) {
            return Err(Error::degenerate(
                "histogram needs at least two distinct values",
            ));
        }
        let mut hist = Histogram {
            min: lo,
            max: hi,
            counts: vec![0; HISTOGRAM_BINS],
            sums: vec![0.0; HISTOGRAM_BINS],
            sq_sums: vec![0.0; HISTOGRAM_BINS],
            total: 0,
        };
        for &v in values.iter().filter(|v| v.is_finite()) {
            let b = hist.bin_of(v);
            let d = v - lo;
            hist.counts[b] += 1;
            hist.sums[b] += d;
            hist.sq_sums[b] += d * d;
            hist.total += 1;
        }
        Ok(hist)
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / HISTOGRAM_BINS as f64
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Bin edge `i` for `i` in `0..=256`.
    pub fn edge(&self, i: usize) -> f64 {
        if i == HISTOGRAM_BINS {
            self.max
        } else {
            self.min + i as f64 * self.bin_width()
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=HISTOGRAM_BINS).map(|i| self.edge(i)).collect()
    }

    #[inline]
    pub fn bin_of(&self, v: f64) -> usize {
        let b = ((v - self.min) / self.bin_width()).floor();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(HISTOGRAM_BINS - 1)
        }
    }

    /// Per-bin sums of `v - min`.
    pub(crate) fn offset_sums(&self) -> &[f64] {
        &self.sums
    }

    /// Per-bin sums of `(v - min)^2`.
    pub(crate) fn offset_sq_sums(&self) -> &[f64] {
        &self.sq_sums
    }

    /// Counts normalized to a probability mass function.
    pub fn pmf(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    fn class_stats(&self, count: u64, sum: f64, sq: f64) -> (f64, f64) {
        let n = count as f64;
        let mean = sum / n;
        let var = (sq / n - mean * mean).max(0.0);
        (mean + self.min, var.sqrt())
    }
}

/// Two-class partition at a histogram cut. The foreground (flooded, dark) class
/// holds the bins below the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoClassSplit {
    pub threshold: f64,
    /// Index of the first background bin.
    pub cut: usize,
    pub weight_f: f64,
    pub weight_b: f64,
    pub mean_f: f64,
    pub mean_b: f64,
    pub std_f: f64,
    pub std_b: f64,
    /// Value of the selection criterion at the optimum
    /// (between-class variance for Otsu, J for Kittler–Illingworth).
    pub objective: f64,
}

/// Threshold selection procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdSelector {
    Otsu,
    Ki,
}

impl ThresholdSelector {
    pub const ALL: [ThresholdSelector; 2] = [ThresholdSelector::Otsu, ThresholdSelector::Ki];

    pub fn name(&self) -> &'static str {
        match self {
            ThresholdSelector::Otsu => "otsu",
            ThresholdSelector::Ki => "ki",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "otsu" => Some(ThresholdSelector::Otsu),
            "ki" => Some(ThresholdSelector::Ki),
            _ => None,
        }
    }

    pub fn select(&self, hist: &Histogram) -> Result<TwoClassSplit> {
        match self {
            ThresholdSelector::Otsu => otsu_threshold(hist),
            ThresholdSelector::Ki => ki_threshold(hist),
        }
    }
}

impl fmt::Display for ThresholdSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Walks the 255 interior cuts, yielding class statistics where both classes
/// are non-empty.
fn scan_cuts(hist: &Histogram, mut visit: impl FnMut(TwoClassSplit)) -> bool {
    let total_count = hist.total;
    let total_sum: f64 = hist.sums.iter().sum();
    let total_sq: f64 = hist.sq_sums.iter().sum();
    let n = total_count as f64;
    let (mut count, mut sum, mut sq) = (0u64, 0.0f64, 0.0f64);
    let mut any = false;
    for cut in 1..HISTOGRAM_BINS {
        count += hist.counts[cut - 1];
        sum += hist.sums[cut - 1];
        sq += hist.sq_sums[cut - 1];
        let rest = total_count - count;
        if count == 0 || rest == 0 {
            continue;
        }
        any = true;
        let (mean_f, std_f) = hist.class_stats(count, sum, sq);
        let (mean_b, std_b) = hist.class_stats(rest, total_sum - sum, total_sq - sq);
        visit(TwoClassSplit {
            threshold: hist.edge(cut),
            cut,
            weight_f: count as f64 / n,
            weight_b: rest as f64 / n,
            mean_f,
            mean_b,
            std_f,
            std_b,
            objective: 0.0,
        });
    }
    any
}

fn no_valid_cut() -> Error {
    Error::degenerate("no valid threshold: all histogram mass in one bin")
}

/// Between-class variance `ω_f ω_b (μ_f − μ_b)²` of a split.
pub fn between_class_variance(s: &TwoClassSplit) -> f64 {
    s.weight_f * s.weight_b * (s.mean_f - s.mean_b).powi(2)
}

/// Kittler–Illingworth criterion
/// `J = 1 + 2(ω_f ln σ_f + ω_b ln σ_b) − 2(ω_f ln ω_f + ω_b ln ω_b)`,
/// with σ floored at 1e-6 and ω at 1e-9 inside the logarithms.
pub fn ki_criterion(s: &TwoClassSplit) -> f64 {
    let lnf = |x: f64, floor: f64| x.max(floor).ln();
    1.0 + 2.0 * (s.weight_f * lnf(s.std_f, KI_SIGMA_FLOOR) + s.weight_b * lnf(s.std_b, KI_SIGMA_FLOOR))
        - 2.0
            * (s.weight_f * lnf(s.weight_f, KI_WEIGHT_FLOOR)
                + s.weight_b * lnf(s.weight_b, KI_WEIGHT_FLOOR))
}

/// Otsu: the cut maximizing between-class variance; ties go to the lower cut.
pub fn otsu_threshold(hist: &Histogram) -> Result<TwoClassSplit> {
    let mut best: Option<TwoClassSplit> = None;
    let any = scan_cuts(hist, |mut s| {
        s.objective = between_class_variance(&s);
        if best.is_none_or(|b| s.objective > b.objective) {
            best = Some(s);
        }
    });
    if !any {
        return Err(no_valid_cut());
    }
    best.ok_or_else(no_valid_cut)
}

/// Kittler–Illingworth minimum-error threshold; ties go to the lower cut.
pub fn ki_threshold(hist: &Histogram) -> Result<TwoClassSplit> {
    let mut best: Option<TwoClassSplit> = None;
    let any = scan_cuts(hist, |mut s| {
        s.objective = ki_criterion(&s);
        if best.is_none_or(|b| s.objective < b.objective) {
            best = Some(s);
        }
    });
    if !any {
        return Err(no_valid_cut());
    }
    best.ok_or_else(no_valid_cut)
}
