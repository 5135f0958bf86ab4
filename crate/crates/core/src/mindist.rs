//! Projection of a forecasted tangency point onto the current efficient
//! frontier: the point on the frontier's efficient branch at minimum
//! Euclidean distance in (sigma, return) space.
//!
//! The minimizer is found by a safeguarded Newton iteration on the
//! derivative of the squared distance, falling back to a scan plus
//! golden-section search whenever Newton misbehaves.

use crate::frontier::{
    efficient_weights, frontier_sigma, FrontierError, FrontierPoint, InterpretableCoefficients,
    MomentEstimate, WeightVector,
};
use thiserror::Error;

const MAX_NEWTON_ITERATIONS: usize = 100;
const DERIVATIVE_TOL: f64 = 1e-14;
const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("invalid frontier coefficients: {0:?}")]
    InvalidCoefficients(InterpretableCoefficients),
    #[error("forecast point is not finite: ({sigma}, {ret})")]
    NonFiniteTarget { sigma: f64, ret: f64 },
    #[error("search failed to bracket a minimum (pathological inputs)")]
    BracketingFailed,
    #[error(transparent)]
    Frontier(#[from] FrontierError),
}

/// How the minimizer was located.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Newton,
    Fallback,
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveMethod::Newton => write!(f, "newton"),
            SolveMethod::Fallback => write!(f, "fallback"),
        }
    }
}

/// A point on the efficient branch closest to a target, with solver
/// diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResult {
    pub point: FrontierPoint,
    pub distance: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

/// Squared Euclidean distance in (sigma, return) space between `target` and
/// the frontier point at return `r`.
pub fn squared_distance(
    ic: &InterpretableCoefficients,
    target: &FrontierPoint,
    r: f64,
) -> f64 {
    let dr = target.ret - r;
    let ds = target.sigma - frontier_sigma(ic, r);
    dr * dr + ds * ds
}

/// Analytic derivative of [`squared_distance`] with respect to `r`:
/// `-2(r_hat - r) + 2(sigma(r) - sigma_hat) * sigma'(r)` with
/// `sigma'(r) = (r - r_mvp) / (u^2 sigma(r))`.
pub fn distance_derivative(
    ic: &InterpretableCoefficients,
    target: &FrontierPoint,
    r: f64,
) -> f64 {
    let sigma = frontier_sigma(ic, r);
    let slope = (r - ic.r_mvp) / (ic.u * ic.u * sigma);
    -2.0 * (target.ret - r) + 2.0 * (sigma - target.sigma) * slope
}

/// Second derivative of the squared distance, used to safeguard Newton.
fn distance_second_derivative(
    ic: &InterpretableCoefficients,
    target: &FrontierPoint,
    r: f64,
) -> f64 {
    let sigma = frontier_sigma(ic, r);
    let u_sq = ic.u * ic.u;
    let slope = (r - ic.r_mvp) / (u_sq * sigma);
    let curvature = ic.sigma_mvp * ic.sigma_mvp / (u_sq * sigma * sigma * sigma);
    2.0 * (1.0 + slope * slope + (sigma - target.sigma) * curvature)
}

fn golden_section(
    ic: &InterpretableCoefficients,
    target: &FrontierPoint,
    mut lo: f64,
    mut hi: f64,
) -> (f64, usize) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut iterations = 0usize;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = squared_distance(ic, target, x1);
    let mut f2 = squared_distance(ic, target, x2);
    while (hi - lo).abs() > 1e-13 * hi.abs().max(1.0) && iterations < 300 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = squared_distance(ic, target, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = squared_distance(ic, target, x2);
        }
        iterations += 1;
    }
    (0.5 * (lo + hi), iterations)
}

/// Fallback: coarse scan over the bracket to isolate the global minimum of
/// the efficient branch, then golden-section refinement.
fn fallback_search(
    ic: &InterpretableCoefficients,
    target: &FrontierPoint,
    lo: f64,
    hi: f64,
) -> Result<(f64, usize), ProjectionError> {
    const SCAN_POINTS: usize = 4096;
    if !(hi > lo) || !hi.is_finite() {
        return Err(ProjectionError::BracketingFailed);
    }
    let step = (hi - lo) / SCAN_POINTS as f64;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=SCAN_POINTS {
        let r = lo + k as f64 * step;
        let f = squared_distance(ic, target, r);
        if !f.is_finite() {
            return Err(ProjectionError::BracketingFailed);
        }
        if f < best.0 {
            best = (f, r);
        }
    }
    let refine_lo = (best.1 - step).max(lo);
    let refine_hi = (best.1 + step).min(hi);
    let (r, iters) = golden_section(ic, target, refine_lo, refine_hi);
    Ok((r.max(lo), SCAN_POINTS + iters))
}

/// Finds the return on the efficient branch (`r >= r_mvp`) minimizing the
/// Euclidean distance to `forecast_tp`, by safeguarded Newton with a
/// golden-section fallback.
pub fn solve_min_distance(
    ic: &InterpretableCoefficients,
    forecast_tp: &FrontierPoint,
) -> Result<ProjectionResult, ProjectionError> {
    if !ic.is_valid() {
        return Err(ProjectionError::InvalidCoefficients(*ic));
    }
    if !forecast_tp.ret.is_finite() || !forecast_tp.sigma.is_finite() {
        return Err(ProjectionError::NonFiniteTarget {
            sigma: forecast_tp.sigma,
            ret: forecast_tp.ret,
        });
    }

    let lo = ic.r_mvp;
    let hi = ic.r_mvp + 50.0 * ic.u * ic.sigma_mvp + (forecast_tp.ret - ic.r_mvp).abs();

    let finish = |r: f64, iterations: usize, method: SolveMethod| {
        let point = FrontierPoint {
            sigma: frontier_sigma(ic, r),
            ret: r,
        };
        ProjectionResult {
            point,
            distance: squared_distance(ic, forecast_tp, r).sqrt(),
            iterations,
            method,
        }
    };

    let mut r = forecast_tp.ret.max(lo);
    let mut objective = squared_distance(ic, forecast_tp, r);
    for iteration in 0..=MAX_NEWTON_ITERATIONS {
        let d1 = distance_derivative(ic, forecast_tp, r);
        let d2 = distance_second_derivative(ic, forecast_tp, r);
        if d1.abs() < DERIVATIVE_TOL {
            // stationary point; accept only if it is a minimum
            if d2 > 0.0 {
                return Ok(finish(r, iteration, SolveMethod::Newton));
            }
            break;
        }
        if !(d2 > 0.0) || iteration == MAX_NEWTON_ITERATIONS {
            break;
        }
        let next = r - d1 / d2;
        if !next.is_finite() || next < lo {
            break; // left the efficient branch
        }
        if (next - r).abs() < STEP_TOL * r.abs().max(1.0) {
            let settled = squared_distance(ic, forecast_tp, next);
            let r_final = if settled <= objective { next } else { r };
            return Ok(finish(r_final, iteration + 1, SolveMethod::Newton));
        }
        let next_objective = squared_distance(ic, forecast_tp, next);
        if next_objective > objective {
            break; // Newton stopped descending
        }
        r = next;
        objective = next_objective;
    }

    let (r_star, iterations) = fallback_search(ic, forecast_tp, lo, hi)?;
    Ok(finish(r_star, iterations, SolveMethod::Fallback))
}

/// Weights of the projected portfolio: mean-variance weights at the
/// projection's return, checked for volatility consistency against the
/// projected point.
pub fn min_distance_weights(
    m: &MomentEstimate,
    proj: &ProjectionResult,
) -> Result<WeightVector, ProjectionError> {
    let w = efficient_weights(m, proj.point.ret)?;
    let vol = w.0.dot(&(m.cov() * &w.0)).sqrt();
    if (vol - proj.point.sigma).abs() > 1e-9 * proj.point.sigma.max(1e-12) {
        return Err(ProjectionError::Frontier(
            FrontierError::InvalidCoefficients(format!(
                "projection sigma {} disagrees with weight volatility {vol}; \
                 moments do not match the projected frontier",
                proj.point.sigma
            )),
        ));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{two_asset, two_asset_moments};
    use crate::frontier::{interpretable_from_merton, merton_coefficients};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_ic() -> InterpretableCoefficients {
        InterpretableCoefficients {
            r_mvp: two_asset::R_MVP,
            sigma_mvp: two_asset::SIGMA_MVP,
            u: two_asset::U,
        }
    }

    /// Independent oracle: dense grid over the efficient branch followed by
    /// ternary refinement inside the best grid cell.
    fn grid_oracle(
        ic: &InterpretableCoefficients,
        target: &FrontierPoint,
        points: usize,
    ) -> f64 {
        let lo = ic.r_mvp;
        let hi = ic.r_mvp + 50.0 * ic.u * ic.sigma_mvp + (target.ret - ic.r_mvp).abs();
        let step = (hi - lo) / points as f64;
        let mut best = (f64::INFINITY, lo);
        for k in 0..=points {
            let r = lo + k as f64 * step;
            let f = squared_distance(ic, target, r);
            if f < best.0 {
                best = (f, r);
            }
        }
        let (mut a, mut b) = ((best.1 - step).max(lo), (best.1 + step).min(hi));
        for _ in 0..200 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if squared_distance(ic, target, m1) < squared_distance(ic, target, m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn squared_distance_hand_value() {
        let ic = reference_ic();
        let target = FrontierPoint {
            sigma: 0.2,
            ret: 0.3,
        };
        // (0.3 - 0.15)^2 + (0.2 - sigma_mvp)^2, evaluated by hand
        assert_relative_eq!(
            squared_distance(&ic, &target, 0.15),
            0.025_931_457_505_076_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn squared_distance_zero_on_frontier() {
        let ic = reference_ic();
        let r = 0.21;
        let on_frontier = FrontierPoint {
            sigma: frontier_sigma(&ic, r),
            ret: r,
        };
        assert_eq!(squared_distance(&ic, &on_frontier, r), 0.0);
    }

    #[test]
    fn squared_distance_continuous_nonnegative() {
        let ic = reference_ic();
        let target = FrontierPoint {
            sigma: 0.4,
            ret: -0.2,
        };
        let mut prev = None;
        for k in 0..2000 {
            let r = -0.5 + k as f64 * 0.001;
            let f = squared_distance(&ic, &target, r);
            assert!(f >= 0.0);
            if let Some(p) = prev {
                let jump: f64 = f - p;
                assert!(jump.abs() < 0.05, "discontinuity near r={r}");
            }
            prev = Some(f);
        }
    }

    #[test]
    fn derivative_zero_at_vertex_for_vertex_target() {
        let ic = reference_ic();
        let vertex_target = FrontierPoint {
            sigma: ic.sigma_mvp,
            ret: ic.r_mvp,
        };
        assert_eq!(distance_derivative(&ic, &vertex_target, ic.r_mvp), 0.0);
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-7;
        let mut checked = 0;
        while checked < 100 {
            let ic = InterpretableCoefficients {
                r_mvp: rng.random_range(-0.02..0.05),
                sigma_mvp: rng.random_range(0.01..0.3),
                u: rng.random_range(0.05..1.5),
            };
            let target = FrontierPoint {
                sigma: rng.random_range(-0.1..0.6),
                ret: rng.random_range(-0.3..0.4),
            };
            let r = ic.r_mvp + rng.random_range(-0.2..0.4);
            let fd = (squared_distance(&ic, &target, r + h)
                - squared_distance(&ic, &target, r - h))
                / (2.0 * h);
            if fd.abs() < 1e-4 {
                continue; // relative comparison needs a nonzero baseline
            }
            let analytic = distance_derivative(&ic, &target, r);
            assert!(
                (analytic - fd).abs() <= 1e-6 * fd.abs(),
                "derivative mismatch: analytic={analytic} fd={fd}"
            );
            checked += 1;
        }
    }

    #[test]
    fn target_on_frontier_projects_to_itself() {
        let ic = reference_ic();
        let r = 0.19;
        let target = FrontierPoint {
            sigma: frontier_sigma(&ic, r),
            ret: r,
        };
        let proj = solve_min_distance(&ic, &target).unwrap();
        assert_eq!(proj.method, SolveMethod::Newton);
        assert!(proj.iterations <= 2, "took {} iterations", proj.iterations);
        assert!(proj.distance < 1e-12);
        assert_relative_eq!(proj.point.ret, r, epsilon = 1e-12);
    }

    #[test]
    fn reference_target_matches_grid_oracle() {
        let ic = reference_ic();
        let target = FrontierPoint {
            sigma: 0.2,
            ret: 0.3,
        };
        let proj = solve_min_distance(&ic, &target).unwrap();
        let oracle = grid_oracle(&ic, &target, 1_000_000);
        assert!(
            (proj.point.ret - oracle).abs() < 1e-6,
            "solver {} vs oracle {oracle}",
            proj.point.ret
        );
        // the returned point lies on the frontier
        assert!((proj.point.sigma - frontier_sigma(&ic, proj.point.ret)).abs() < 1e-12);
    }

    #[test]
    fn target_below_vertex_projects_to_vertex() {
        let ic = reference_ic();
        let target = FrontierPoint {
            sigma: 0.0,
            ret: ic.r_mvp,
        };
        let proj = solve_min_distance(&ic, &target).unwrap();
        assert_relative_eq!(proj.point.ret, ic.r_mvp, epsilon = 1e-9);
        assert_relative_eq!(proj.point.sigma, ic.sigma_mvp, epsilon = 1e-9);
        let oracle = grid_oracle(&ic, &target, 100_000);
        assert!((proj.point.ret - oracle).abs() < 1e-6);
    }

    #[test]
    fn target_above_vertex_avoids_the_stationary_maximum() {
        // a target straight above the vertex, far enough that the vertex is
        // a local maximum of the distance; the solver must not stop there
        let ic = reference_ic();
        let target = FrontierPoint {
            sigma: ic.sigma_mvp + 2.0 * ic.u * ic.u * ic.sigma_mvp,
            ret: ic.r_mvp,
        };
        let proj = solve_min_distance(&ic, &target).unwrap();
        let oracle = grid_oracle(&ic, &target, 1_000_000);
        assert!(
            (proj.point.ret - oracle).abs() < 1e-6,
            "solver {} vs oracle {oracle}",
            proj.point.ret
        );
        assert!(proj.point.ret > ic.r_mvp + 1e-6);
    }

    #[test]
    fn projection_is_idempotent() {
        let ic = reference_ic();
        let target = FrontierPoint {
            sigma: 0.05,
            ret: 0.4,
        };
        let first = solve_min_distance(&ic, &target).unwrap();
        let second = solve_min_distance(&ic, &first.point).unwrap();
        assert!(second.distance < 1e-10);
        assert_relative_eq!(second.point.ret, first.point.ret, epsilon = 1e-9);
    }

    #[test]
    fn random_targets_beat_grid_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..25 {
            let ic = InterpretableCoefficients {
                r_mvp: rng.random_range(-0.01..0.03),
                sigma_mvp: rng.random_range(0.02..0.2),
                u: rng.random_range(0.1..1.0),
            };
            let target = FrontierPoint {
                sigma: rng.random_range(-0.05..0.5),
                ret: rng.random_range(-0.2..0.3),
            };
            let proj = solve_min_distance(&ic, &target).unwrap();
            let lo = ic.r_mvp;
            let hi = ic.r_mvp + 50.0 * ic.u * ic.sigma_mvp + (target.ret - ic.r_mvp).abs();
            let best = proj.distance * proj.distance;
            for k in 0..=10_000 {
                let r = lo + (hi - lo) * k as f64 / 10_000.0;
                assert!(
                    best <= squared_distance(&ic, &target, r) + 1e-12,
                    "grid point r={r} beats solver"
                );
            }
            // first-order certificate: sign change or boundary optimum
            let d_lo = distance_derivative(&ic, &target, proj.point.ret - 1e-7);
            let d_hi = distance_derivative(&ic, &target, proj.point.ret + 1e-7);
            let at_boundary = (proj.point.ret - ic.r_mvp).abs() < 1e-9;
            assert!(
                at_boundary || (d_lo <= 0.0 && d_hi >= 0.0),
                "no sign change at reported minimum"
            );
        }
    }

    #[test]
    fn weights_at_projection_return_reference_values() {
        let m = two_asset_moments();
        let ic = interpretable_from_merton(&merton_coefficients(&m).unwrap()).unwrap();
        // projecting down onto the frontier at the tangency return
        let proj = solve_min_distance(
            &ic,
            &FrontierPoint {
                sigma: two_asset::SIGMA_TANGENCY,
                ret: two_asset::R_TANGENCY,
            },
        )
        .unwrap();
        let w = min_distance_weights(&m, &proj).unwrap();
        assert_relative_eq!(w.0[0], 0.25, epsilon = 1e-9);
        assert_relative_eq!(w.0[1], 0.75, epsilon = 1e-9);
    }

    #[test]
    fn weights_at_vertex_are_min_variance_portfolio() {
        let m = two_asset_moments();
        let ic = interpretable_from_merton(&merton_coefficients(&m).unwrap()).unwrap();
        let proj = solve_min_distance(
            &ic,
            &FrontierPoint {
                sigma: 0.0,
                ret: ic.r_mvp,
            },
        )
        .unwrap();
        let w = min_distance_weights(&m, &proj).unwrap();
        assert_relative_eq!(w.0[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(w.0[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn mismatched_moments_are_rejected() {
        let m = two_asset_moments();
        let wrong_ic = InterpretableCoefficients {
            r_mvp: 0.01,
            sigma_mvp: 0.5,
            u: 0.2,
        };
        let proj = solve_min_distance(
            &wrong_ic,
            &FrontierPoint {
                sigma: 0.6,
                ret: 0.05,
            },
        )
        .unwrap();
        assert!(min_distance_weights(&m, &proj).is_err());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let ic = reference_ic();
        assert!(solve_min_distance(
            &InterpretableCoefficients {
                r_mvp: 0.0,
                sigma_mvp: -1.0,
                u: 1.0
            },
            &FrontierPoint { sigma: 0.1, ret: 0.1 },
        )
        .is_err());
        assert!(solve_min_distance(
            &ic,
            &FrontierPoint {
                sigma: f64::NAN,
                ret: 0.1
            },
        )
        .is_err());
    }
}
