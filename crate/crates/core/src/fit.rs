//! Fitting beta distributions to elicited judgements.
//!
//! Three fitting procedures are provided:
//!
//! * [`fit_three_point`] matches the 5%, 50% and 95% quantiles by least squares
//!   on the quantile scale.
//! * [`fit_three_point_probability`] matches the same three points by least
//!   squares on the probability scale, `sum (F(q_i) - p_i)^2`. This is the
//!   convention of the SHELF `fitdist` routine and gives much tighter fits for
//!   skewed triples near zero.
//! * [`fit_two_point`] treats the best estimate as the mode and solves for the
//!   95% quantile exactly.
//!
//! [`fit_moments`] recovers shapes from a sample mean and standard deviation.

use serde::{Deserialize, Serialize};

use crate::beta::{beta_cdf, beta_quantile, BetaParams, InvalidShape};
use crate::model::{BestIs, ElicitedTriple, TripleError};

/// Probabilities matched by the three-point fits.
pub const FIT_PROBABILITIES: [f64; 3] = [0.05, 0.5, 0.95];

const LN_SHAPE_MIN: f64 = -2.995_732_273_553_991; // ln 0.05
const LN_SHAPE_MAX: f64 = 5.298_317_366_548_036; // ln 200
const GRID: usize = 60;

const TWO_POINT_B_MIN: f64 = 1e-6;
const TWO_POINT_B_MAX: f64 = 1e4;
const TWO_POINT_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    ThreePoint,
    ThreePointProbability,
    TwoPoint,
    MomentMatch,
}

/// Scale on which the three-point discrepancy is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Quantile,
    #[default]
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AchievedQuantiles {
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl AchievedQuantiles {
    pub fn of(params: BetaParams) -> Self {
        AchievedQuantiles {
            q05: beta_quantile(params, 0.05),
            q50: beta_quantile(params, 0.5),
            q95: beta_quantile(params, 0.95),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: BetaParams,
    pub achieved_quantiles: AchievedQuantiles,
    /// Least-squares objective at the optimum; zero for exact methods.
    pub objective_value: f64,
    pub method: FitMethod,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("invalid triple: {0}")]
    InvalidTriple(#[from] TripleError),
    #[error("degenerate triple: lower and upper quantiles coincide")]
    DegenerateTriple,
    #[error("three-point fits need 0 < q05 and q95 < 1, got ({q05}, {q95})")]
    BoundaryTriple { q05: f64, q95: f64 },
    #[error("three-point fits read the best estimate as a median")]
    BestIsMode,
    #[error("invalid two-point input: mode {mode}, q95 {q95}")]
    InvalidTwoPoint { mode: f64, q95: f64 },
    #[error("no beta with mode {mode} has 95% quantile {q95} in the search range")]
    NoSolution { mode: f64, q95: f64 },
    #[error("mean must lie in (0, 1) and sd must be positive, got ({mean}, {sd})")]
    InvalidMoments { mean: f64, sd: f64 },
    #[error("variance {variance} is not below mean(1-mean) = {limit}")]
    VarianceTooLarge { variance: f64, limit: f64 },
    #[error(transparent)]
    Shape(#[from] InvalidShape),
    #[error("no remaining probability mass for an elicited category")]
    NoRemainingMass,
}

fn check_three_point(triple: &ElicitedTriple) -> Result<(), FitError> {
    if triple.q05 == triple.q95 {
        return Err(FitError::DegenerateTriple);
    }
    triple.check()?;
    if triple.best_is == BestIs::Mode {
        return Err(FitError::BestIsMode);
    }
    if triple.q05 <= 0.0 || triple.q95 >= 1.0 {
        return Err(FitError::BoundaryTriple {
            q05: triple.q05,
            q95: triple.q95,
        });
    }
    Ok(())
}

/// Sum of squared differences between elicited and fitted quantiles.
pub fn quantile_objective(triple: &ElicitedTriple, params: BetaParams) -> f64 {
    let target = [triple.q05, triple.best, triple.q95];
    FIT_PROBABILITIES
        .iter()
        .zip(target)
        .map(|(&p, q)| {
            let d = q - beta_quantile(params, p);
            d * d
        })
        .sum()
}

/// Sum of squared differences between fitted CDF values at the elicited
/// quantiles and their nominal probabilities.
pub fn probability_objective(triple: &ElicitedTriple, params: BetaParams) -> f64 {
    let target = [triple.q05, triple.best, triple.q95];
    FIT_PROBABILITIES
        .iter()
        .zip(target)
        .map(|(&p, q)| {
            let d = beta_cdf(params, q) - p;
            d * d
        })
        .sum()
}

/// Three-point fit on the quantile scale.
pub fn fit_three_point(triple: &ElicitedTriple) -> Result<FitReport, FitError> {
    check_three_point(triple)?;
    let (params, value) = minimise_over_shapes(|p| quantile_objective(triple, p));
    Ok(FitReport {
        params,
        achieved_quantiles: AchievedQuantiles::of(params),
        objective_value: value,
        method: FitMethod::ThreePoint,
    })
}

/// Three-point fit on the probability scale.
pub fn fit_three_point_probability(triple: &ElicitedTriple) -> Result<FitReport, FitError> {
    check_three_point(triple)?;
    let (params, value) = minimise_over_shapes(|p| probability_objective(triple, p));
    Ok(FitReport {
        params,
        achieved_quantiles: AchievedQuantiles::of(params),
        objective_value: value,
        method: FitMethod::ThreePointProbability,
    })
}

pub fn fit_three_point_with(triple: &ElicitedTriple, objective: Objective) -> Result<FitReport, FitError> {
    match objective {
        Objective::Quantile => fit_three_point(triple),
        Objective::Probability => fit_three_point_probability(triple),
    }
}

fn shapes(theta: [f64; 2]) -> BetaParams {
    BetaParams {
        a: theta[0].exp(),
        b: theta[1].exp(),
    }
}

/// Grid search over (ln a, ln b) followed by Nelder-Mead refinement.
fn minimise_over_shapes(f: impl Fn(BetaParams) -> f64) -> (BetaParams, f64) {
    let step = (LN_SHAPE_MAX - LN_SHAPE_MIN) / (GRID - 1) as f64;
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for i in 0..GRID {
        for j in 0..GRID {
            let theta = [
                LN_SHAPE_MIN + i as f64 * step,
                LN_SHAPE_MIN + j as f64 * step,
            ];
            let v = f(shapes(theta));
            if v < best.1 {
                best = (theta, v);
            }
        }
    }
    let g = |t: [f64; 2]| {
        let v = f(shapes(t));
        if v.is_finite() && t[0].abs() < 50.0 && t[1].abs() < 50.0 {
            v
        } else {
            f64::INFINITY
        }
    };
    let (mut theta, mut value) = nelder_mead(&g, best.0, step);
    // restart from the optimum until a fresh simplex no longer improves
    for _ in 0..20 {
        let (t, v) = nelder_mead(&g, theta, step / 4.0);
        let improved = value - v;
        if v < value {
            theta = t;
            value = v;
        }
        if improved < 1e-12 {
            break;
        }
    }
    (shapes(theta), value)
}

fn nelder_mead(f: &impl Fn([f64; 2]) -> f64, start: [f64; 2], step: f64) -> ([f64; 2], f64) {
    let mut simplex = [
        start,
        [start[0] + step, start[1]],
        [start[0], start[1] + step],
    ];
    let mut values = simplex.map(f);
    for _ in 0..10_000 {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let spread = (simplex[1][0] - simplex[0][0])
            .abs()
            .max((simplex[1][1] - simplex[0][1]).abs())
            .max((simplex[2][0] - simplex[0][0]).abs())
            .max((simplex[2][1] - simplex[0][1]).abs());
        if values[2] - values[0] <= 1e-15 && spread < 1e-10 {
            break;
        }
        if spread < 1e-14 {
            break;
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
            continue;
        }
        if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
            continue;
        }
        let contracted = if fr < values[2] { along(-0.5) } else { along(0.5) };
        let fc = f(contracted);
        if fc < values[2].min(fr) {
            simplex[2] = contracted;
            values[2] = fc;
            continue;
        }
        for k in 1..3 {
            simplex[k] = [
                simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
            ];
            values[k] = f(simplex[k]);
        }
    }
    let i = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    (simplex[i], values[i])
}

/// `a` implied by mode `m` and shape `b`: `a = (1 + m(b - 2)) / (1 - m)`.
pub fn two_point_a(mode: f64, b: f64) -> f64 {
    (1.0 + mode * (b - 2.0)) / (1.0 - mode)
}

/// Two-point fit: best estimate as the mode, matched 95% quantile.
///
/// Bisection on `b` over the map `b -> F_{a(b), b}(q95)`, which is
/// increasing when the mode stays interior. For modes above one half the
/// lower end of the bracket is raised to `b = 1`; below that the implied
/// distribution is J-shaped towards one and the map stops being monotone.
pub fn fit_two_point(mode: f64, q95: f64) -> Result<FitReport, FitError> {
    let valid = (0.0..1.0).contains(&mode) && mode < q95 && q95 < 1.0;
    if !valid {
        return Err(FitError::InvalidTwoPoint { mode, q95 });
    }
    let stability = if mode > 0.5 { 1.0 } else { TWO_POINT_B_MIN };
    // a > 0 requires b > 2 - 1/m
    let positive_a = if mode > 0.0 { 2.0 - 1.0 / mode } else { f64::NEG_INFINITY };
    let mut lo = stability.max(positive_a * (1.0 + 1e-12) + 1e-12);
    let mut hi = TWO_POINT_B_MAX;
    let h = |b: f64| beta_cdf(BetaParams { a: two_point_a(mode, b), b }, q95) - 0.95;
    let (h_lo, h_hi) = (h(lo), h(hi));
    if !(h_lo <= 0.0 && h_hi >= 0.0) {
        return Err(FitError::NoSolution { mode, q95 });
    }
    for _ in 0..TWO_POINT_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pick = |b: f64| {
        let p = BetaParams { a: two_point_a(mode, b), b };
        ((beta_quantile(p, 0.95) - q95).abs(), p)
    };
    let (e_lo, p_lo) = pick(lo);
    let (e_hi, p_hi) = pick(hi);
    let params = if e_lo <= e_hi { p_lo } else { p_hi };
    Ok(FitReport {
        params,
        achieved_quantiles: AchievedQuantiles::of(params),
        objective_value: 0.0,
        method: FitMethod::TwoPoint,
    })
}

/// Shapes with the given mean and standard deviation.
pub fn fit_moments(mean: f64, sd: f64) -> Result<BetaParams, FitError> {
    if !(mean > 0.0 && mean < 1.0 && sd > 0.0 && sd.is_finite()) {
        return Err(FitError::InvalidMoments { mean, sd });
    }
    let variance = sd * sd;
    let limit = mean * (1.0 - mean);
    if variance >= limit {
        return Err(FitError::VarianceTooLarge { variance, limit });
    }
    let k = limit / variance - 1.0;
    Ok(BetaParams {
        a: mean * k,
        b: (1.0 - mean) * k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_triple_gives_equal_shapes() {
        let r = fit_three_point(&ElicitedTriple::new(0.25, 0.5, 0.75)).unwrap();
        assert!((r.params.a - r.params.b).abs() < 1e-6, "{:?}", r.params);
        assert!((r.achieved_quantiles.q50 - 0.5).abs() < 1e-8);
    }

    #[test]
    fn recovers_exact_beta_quantiles() {
        let truth = BetaParams::new(4.0, 9.0).unwrap();
        let q = AchievedQuantiles::of(truth);
        let r = fit_three_point(&ElicitedTriple::new(q.q05, q.q50, q.q95)).unwrap();
        assert!(r.objective_value < 1e-14);
        assert!((r.achieved_quantiles.q95 - q.q95).abs() < 1e-7);
        let p = fit_three_point_probability(&ElicitedTriple::new(q.q05, q.q50, q.q95)).unwrap();
        assert!((p.params.a - 4.0).abs() < 1e-4 && (p.params.b - 9.0).abs() < 1e-4);
    }

    #[test]
    fn three_point_rejects_bad_input() {
        assert_eq!(
            fit_three_point(&ElicitedTriple::new(0.3, 0.3, 0.3)),
            Err(FitError::DegenerateTriple)
        );
        assert!(matches!(
            fit_three_point(&ElicitedTriple::new(0.0, 0.1, 0.2)),
            Err(FitError::BoundaryTriple { .. })
        ));
        let mut t = ElicitedTriple::new(0.1, 0.2, 0.3);
        t.best_is = BestIs::Mode;
        assert_eq!(fit_three_point(&t), Err(FitError::BestIsMode));
    }

    #[test]
    fn two_point_half_mode_is_symmetric() {
        for q95 in [0.6, 0.75, 0.9, 0.99] {
            let r = fit_two_point(0.5, q95).unwrap();
            assert!((r.params.a - r.params.b).abs() <= 1e-12 * r.params.b);
            assert!((r.achieved_quantiles.q95 - q95).abs() < 1e-8);
        }
    }

    #[test]
    fn two_point_zero_mode_has_closed_form() {
        let r = fit_two_point(0.0, 0.95).unwrap();
        assert_eq!(r.params.a, 1.0);
        // F(x) = 1 - (1-x)^b, so b = ln 0.05 / ln 0.05 = 1
        assert!((r.params.b - 1.0).abs() < 1e-9);
        let r = fit_two_point(0.0, 0.2).unwrap();
        assert!((r.params.b - 0.05f64.ln() / 0.8f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn two_point_unsolvable_inputs() {
        assert!(matches!(fit_two_point(0.9, 0.97), Err(FitError::NoSolution { .. })));
        assert!(matches!(fit_two_point(0.5, 0.4), Err(FitError::InvalidTwoPoint { .. })));
        assert!(matches!(fit_two_point(1.0, 1.0), Err(FitError::InvalidTwoPoint { .. })));
    }

    #[test]
    fn moments_closed_forms() {
        let u = fit_moments(0.5, (1.0f64 / 12.0).sqrt()).unwrap();
        assert!((u.a - 1.0).abs() < 1e-12 && (u.b - 1.0).abs() < 1e-12);
        let p = fit_moments(0.5, 0.25).unwrap();
        assert!((p.a - 1.5).abs() < 1e-12 && (p.b - 1.5).abs() < 1e-12);
        let q = fit_moments(0.2, 0.1).unwrap();
        assert!((q.a - 3.0).abs() < 1e-12 && (q.b - 12.0).abs() < 1e-12);
        assert!(matches!(fit_moments(0.5, 0.5), Err(FitError::VarianceTooLarge { .. })));
    }
}
