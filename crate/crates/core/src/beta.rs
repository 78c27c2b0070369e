//! Beta distribution numerics: CDF, quantile, density and moments.

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("beta shapes must be positive and finite, got ({a}, {b})")]
pub struct InvalidShape {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self, InvalidShape> {
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok(BetaParams { a, b })
        } else {
            Err(InvalidShape { a, b })
        }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn variance(&self) -> f64 {
        let s = self.a + self.b;
        self.a * self.b / (s * s * (s + 1.0))
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Interior mode, defined when both shapes exceed one.
    pub fn mode(&self) -> Option<f64> {
        (self.a > 1.0 && self.b > 1.0).then(|| (self.a - 1.0) / (self.a + self.b - 2.0))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        beta_cdf(*self, x)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        beta_quantile(*self, p)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        beta_pdf(*self, x)
    }
}

/// Regularized incomplete beta function I_x(a, b).
pub fn beta_cdf(params: BetaParams, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if 1.0 - x < 1e-12 {
        // statrs rounds x this close to 1 up to 1; 1 - x is exact here
        return (1.0 - beta_reg(params.b, params.a, 1.0 - x)).clamp(0.0, 1.0);
    }
    beta_reg(params.a, params.b, x).clamp(0.0, 1.0)
}

pub fn beta_pdf(params: BetaParams, x: f64) -> f64 {
    let BetaParams { a, b } = params;
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    if x == 0.0 {
        return match a.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => b,
            _ => 0.0,
        };
    }
    if x == 1.0 {
        return match b.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => a,
            _ => 0.0,
        };
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

/// Inverse of [`beta_cdf`] in `p`.
///
/// The result is the representable `x` closest to the root, so the CDF matches
/// `p` to 1e-10 except where one ulp of `x` moves the CDF by more than that
/// (steep flanks of shapes with a tiny `a` or `b`).
///
/// Safeguarded Newton: an iterate that leaves the current bracket is replaced
/// by a bisection step. The bracket always contains the root, so the loop
/// converges even where the density is unbounded at an endpoint.
pub fn beta_quantile(params: BetaParams, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = initial_guess(params, p);
    for _ in 0..200 {
        let f = beta_cdf(params, x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
            break;
        }
        let d = beta_pdf(params, x);
        let newton = x - f / d;
        let next = if d.is_finite() && d > 0.0 && newton > lo && newton < hi {
            newton
        } else if lo == 0.0 && hi < 1e-3 {
            // quantiles of small shapes can sit many decades below 1e-3
            hi * 1e-3
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 0.5 * f64::EPSILON * x.abs().max(1e-300) {
            x = next;
            break;
        }
        x = next;
    }
    polish(params, p, x)
}

/// Steps to adjacent floats while that brings the CDF closer to `p`.
fn polish(params: BetaParams, p: f64, mut x: f64) -> f64 {
    let err = |y: f64| (beta_cdf(params, y) - p).abs();
    let mut e = err(x);
    for _ in 0..64 {
        let (down, up) = (x.next_down().max(0.0), x.next_up().min(1.0));
        let (ed, eu) = (err(down), err(up));
        if ed < e && ed <= eu {
            (x, e) = (down, ed);
        } else if eu < e {
            (x, e) = (up, eu);
        } else {
            break;
        }
    }
    x
}

fn initial_guess(params: BetaParams, p: f64) -> f64 {
    let BetaParams { a, b } = params;
    // small-x and small-(1-x) power-law asymptotes, else the mean
    let ln_b = ln_beta(a, b);
    let lower = ((p * a).ln() + ln_b).exp().powf(1.0 / a);
    let upper = 1.0 - (((1.0 - p) * b).ln() + ln_b).exp().powf(1.0 / b);
    let m = a / (a + b);
    let guess = if lower < m { lower } else if upper > m { upper } else { m };
    if guess > 0.0 && guess < 1.0 && guess.is_finite() {
        guess
    } else {
        m
    }
}
