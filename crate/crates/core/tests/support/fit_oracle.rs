//! Least-squares beta fit objectives evaluated with statrs, and a brute-force
//! minimiser that shares no code with the crate's optimiser.

use pathwise_core::ElicitedTriple;
use statrs::distribution::{Beta, ContinuousCDF};

pub const PROBS: [f64; 3] = [0.05, 0.5, 0.95];

pub fn targets(t: &ElicitedTriple) -> [f64; 3] {
    [t.q05, t.best, t.q95]
}

pub fn oracle_quantile_objective(t: &ElicitedTriple, a: f64, b: f64) -> f64 {
    let dist = Beta::new(a, b).unwrap();
    PROBS
        .iter()
        .zip(targets(t))
        .map(|(&p, q)| (dist.inverse_cdf(p) - q).powi(2))
        .sum()
}

pub fn oracle_probability_objective(t: &ElicitedTriple, a: f64, b: f64) -> f64 {
    let dist = Beta::new(a, b).unwrap();
    PROBS
        .iter()
        .zip(targets(t))
        .map(|(&p, q)| (dist.cdf(q) - p).powi(2))
        .sum()
}

/// Grid over log shapes, then compass search from the best few grid points.
pub fn grid_search(f: impl Fn(f64, f64) -> f64) -> f64 {
    let (lo, hi) = (0.05f64.ln(), 200f64.ln());
    let n = 120;
    let h = (hi - lo) / n as f64;
    let g = |u: f64, v: f64| f(u.clamp(lo, hi).exp(), v.clamp(lo, hi).exp());
    let mut grid: Vec<(f64, f64, f64)> = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..=n {
        for j in 0..=n {
            let (u, v) = (lo + i as f64 * h, lo + j as f64 * h);
            grid.push((g(u, v), u, v));
        }
    }
    grid.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = f64::INFINITY;
    for &(mut fx, mut u, mut v) in grid.iter().take(5) {
        let mut step = h;
        while step > 1e-11 {
            let mut moved = false;
            for (du, dv) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
                let (nu, nv) = (u + du * step, v + dv * step);
                let fy = g(nu, nv);
                if fy < fx {
                    (fx, u, v) = (fy, nu, nv);
                    moved = true;
                    break;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best = best.min(fx);
    }
    best
}
