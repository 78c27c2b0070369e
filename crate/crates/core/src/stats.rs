//! Summaries of Monte Carlo output: moments, intervals, mode, densities and
//! scenario comparisons.

use serde::{Deserialize, Serialize};

use crate::beta::{beta_quantile, BetaParams};
use crate::fit::fit_moments;

/// Bins of the histogram used to locate the mode.
pub const MODE_BINS: usize = 512;

/// Largest fraction of draws that may be dropped from a ratio comparison.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no samples")]
    Empty,
    #[error("samples must lie in [0, 1]; found {0}")]
    OutOfRange(f64),
    #[error("interval mass must lie in (0, 1), got {0}")]
    InvalidMass(f64),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("{dropped} of {draws} draws have a zero denominator")]
    TooManyDegenerateDraws { dropped: usize, draws: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub median: f64,
    pub mode: f64,
    pub empirical_interval: Interval,
    /// Beta with the sample mean and sd; absent when the sample has no spread.
    pub implied_beta: Option<BetaParams>,
    pub beta_interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonStats {
    /// Relative risk, without-test over with-test.
    pub rr_interval: Interval,
    pub or_interval: Interval,
    /// Draws left out because a ratio was undefined.
    pub dropped: usize,
    /// Whether the two scenarios' empirical intervals overlap.
    pub overlap_flag: bool,
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn mean_sd(samples: &[f64]) -> (f64, f64) {
    if samples.iter().all(|&x| x == samples[0]) {
        return (samples[0], 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Midpoint of the fullest bin of a histogram spanning the sample range.
pub fn histogram_mode(sorted: &[f64]) -> f64 {
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    if max <= min {
        return min;
    }
    let width = (max - min) / MODE_BINS as f64;
    let mut counts = vec![0usize; MODE_BINS];
    for &x in sorted {
        let b = (((x - min) / width) as usize).min(MODE_BINS - 1);
        counts[b] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    min + (best as f64 + 0.5) * width
}

fn tails(mass: f64) -> Result<(f64, f64), StatsError> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(StatsError::InvalidMass(mass));
    }
    let t = (1.0 - mass) / 2.0;
    Ok((t, 1.0 - t))
}

pub fn summarize(samples: &[f64], mass: f64) -> Result<SummaryStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(&x) = samples.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(StatsError::OutOfRange(x));
    }
    let (lo_p, hi_p) = tails(mass)?;
    let sorted = sorted_copy(samples);
    let (mean, sd) = mean_sd(samples);
    let implied_beta = fit_moments(mean, sd).ok();
    let beta_interval = match implied_beta {
        Some(b) => Interval {
            lo: beta_quantile(b, lo_p),
            hi: beta_quantile(b, hi_p),
        },
        None => Interval { lo: mean, hi: mean },
    };
    Ok(SummaryStats {
        n: samples.len(),
        mean,
        sd,
        median: quantile_sorted(&sorted, 0.5),
        mode: histogram_mode(&sorted),
        empirical_interval: Interval {
            lo: quantile_sorted(&sorted, lo_p),
            hi: quantile_sorted(&sorted, hi_p),
        },
        implied_beta,
        beta_interval,
    })
}

/// Per-draw relative risk and odds ratio, without-test over with-test.
/// Draws where either ratio is undefined are left out of both.
pub fn ratio_samples(with: &[f64], without: &[f64]) -> Result<(Vec<f64>, Vec<f64>, usize), StatsError> {
    if with.len() != without.len() {
        return Err(StatsError::LengthMismatch(with.len(), without.len()));
    }
    let mut rr = Vec::with_capacity(with.len());
    let mut or = Vec::with_capacity(with.len());
    let mut dropped = 0;
    for (&t, &u) in with.iter().zip(without) {
        if t <= 0.0 || t >= 1.0 || u >= 1.0 {
            dropped += 1;
            continue;
        }
        rr.push(u / t);
        or.push((u / (1.0 - u)) / (t / (1.0 - t)));
    }
    Ok((rr, or, dropped))
}

pub fn compare_scenarios(with: &[f64], without: &[f64], mass: f64) -> Result<ComparisonStats, StatsError> {
    let (lo_p, hi_p) = tails(mass)?;
    let (rr, or, dropped) = ratio_samples(with, without)?;
    if rr.is_empty() || dropped as f64 > MAX_DEGENERATE_FRACTION * with.len() as f64 {
        return Err(StatsError::TooManyDegenerateDraws {
            dropped,
            draws: with.len(),
        });
    }
    let interval = |v: &[f64]| {
        let s = sorted_copy(v);
        Interval {
            lo: quantile_sorted(&s, lo_p),
            hi: quantile_sorted(&s, hi_p),
        }
    };
    let (sw, su) = (sorted_copy(with), sorted_copy(without));
    let iw = Interval {
        lo: quantile_sorted(&sw, lo_p),
        hi: quantile_sorted(&sw, hi_p),
    };
    let iu = Interval {
        lo: quantile_sorted(&su, lo_p),
        hi: quantile_sorted(&su, hi_p),
    };
    Ok(ComparisonStats {
        rr_interval: interval(&rr),
        or_interval: interval(&or),
        dropped,
        overlap_flag: iw.overlaps(&iu),
    })
}

const KDE_BINS: usize = 4096;

/// Silverman's rule-of-thumb bandwidth.
fn bandwidth(samples: &[f64]) -> f64 {
    let sorted = sorted_copy(samples);
    let (_, sd) = mean_sd(samples);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (samples.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate on an even grid over
/// `[0, 1.1 * max(samples)]`.
pub fn density_grid(samples: &[f64], points: usize) -> Vec<(f64, f64)> {
    let max = samples.iter().copied().fold(0.0, f64::max);
    let upper = if max > 0.0 { 1.1 * max } else { 1.0 };
    density_grid_on(samples, upper, points)
}

/// Kernel density estimate on an even grid over `[0, upper]`.
///
/// Samples are linearly binned first. Mass that the kernel would put below
/// zero is reflected back, since the quantities are probabilities. The grid
/// is rescaled to integrate to one by the trapezoid rule.
pub fn density_grid_on(samples: &[f64], upper: f64, points: usize) -> Vec<(f64, f64)> {
    let points = points.max(2);
    let dx = upper / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| i as f64 * dx).collect();
    if samples.is_empty() {
        return grid.into_iter().map(|x| (x, 0.0)).collect();
    }
    let h = bandwidth(samples).max(2.0 * dx);
    let bin_width = upper / KDE_BINS as f64;
    let mut weights = vec![0.0; KDE_BINS + 1];
    for &x in samples {
        let pos = (x / bin_width).clamp(0.0, KDE_BINS as f64);
        let i = (pos.floor() as usize).min(KDE_BINS - 1);
        let frac = pos - i as f64;
        weights[i] += 1.0 - frac;
        weights[i + 1] += frac;
    }
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = (8.0 * h / bin_width).ceil() as isize;
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let centre = (x / bin_width).round() as isize;
            let lo = (centre - reach).max(0) as usize;
            let hi = ((centre + reach).max(0) as usize).min(KDE_BINS);
            // reflected images of bins near zero also land within reach of x
            let mut total = 0.0;
            for (j, &w) in weights.iter().enumerate().take(hi + 1).skip(lo) {
                if w == 0.0 {
                    continue;
                }
                let c = j as f64 * bin_width;
                let z = (x - c) / h;
                total += w * (-0.5 * z * z).exp();
            }
            let reflect_hi = ((reach - centre).max(0) as usize).min(KDE_BINS);
            for (j, &w) in weights.iter().enumerate().take(reflect_hi + 1) {
                if w == 0.0 {
                    continue;
                }
                let c = j as f64 * bin_width;
                let z = (x + c) / h;
                total += w * (-0.5 * z * z).exp();
            }
            total * norm
        })
        .collect();
    let integral = trapezoid(&grid, &density);
    if integral > 0.0 {
        for d in &mut density {
            *d /= integral;
        }
    }
    grid.into_iter().zip(density).collect()
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Overlap coefficient of two samples: the integral of the pointwise
/// minimum of their density estimates on a shared grid.
pub fn overlap_coefficient(a: &[f64], b: &[f64], points: usize) -> f64 {
    let max = a.iter().chain(b).copied().fold(0.0, f64::max);
    let upper = if max > 0.0 { 1.1 * max } else { 1.0 };
    let fa = density_grid_on(a, upper, points);
    let fb = density_grid_on(b, upper, points);
    let x: Vec<f64> = fa.iter().map(|p| p.0).collect();
    let m: Vec<f64> = fa.iter().zip(&fb).map(|(p, q)| p.1.min(q.1)).collect();
    trapezoid(&x, &m)
}
