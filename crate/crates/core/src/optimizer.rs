//! Projected gradient descent over the box of admissible controls.
//!
//! The admissible set is `{ alpha <= v <= beta }` nodewise on the control
//! cylinder, so projection is a clamp and first-order optimality is the
//! fixed-point condition `u = clamp(-q/mu)`. The loop is plain projected
//! gradient with Armijo backtracking from unit step; for this objective the
//! Hessian spectrum is `[mu, mu + C]` with a small `C`, so the iteration is
//! linearly convergent and a few hundred iterations reach tight tolerances.
//!
//! Failure to converge is reported in the result, not as an error: the report
//! carries the residual history so a caller can see how far the run got.

use crate::diagnostics;
use crate::objective::{self, CostBreakdown};
use crate::state::{control_inner, control_norm, Control, ProblemSpec, SolveError, Trajectory};
use crate::adjoint::control_restriction;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Nodes within this distance of a bound count as active, and multiplier
/// values above it count as strongly active, when sampling the critical cone.
pub const ACTIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    /// Stop when `||u - clamp(u - grad)||` drops below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c1: f64,
    /// Backtracking halvings per iteration before giving up.
    pub max_halvings: usize,
    /// Critical-cone directions to sample for the curvature figure in the
    /// report; 0 skips the sampling.
    pub ssc_directions: usize,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tol: 1e-6,
            max_iters: 500,
            armijo_c1: 1e-4,
            max_halvings: 40,
            ssc_directions: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
    pub final_cost: CostBreakdown,
    /// `||u_k - clamp(u_k - grad_k)||` per iterate, including the last.
    pub residual_history: Vec<f64>,
    pub cost_history: Vec<f64>,
    /// Fraction of control nodes sitting exactly at the lower bound,
    /// the upper bound, and strictly between.
    pub active_lower_fraction: f64,
    pub active_upper_fraction: f64,
    pub inactive_fraction: f64,
    /// Smallest sampled curvature over critical-cone directions, when asked
    /// for; `None` when sampling was skipped or the cone collapsed to zero.
    pub ssc_min_curvature: Option<f64>,
    pub ssc_directions_used: usize,
}

/// First-order optimality measures at a given control.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KktReport {
    /// `||u - clamp(-q/mu)||` over the control cylinder.
    pub stationarity: f64,
    /// Smallest sampled value of `<grad J(u), v - u>` over random admissible
    /// `v`; should not be meaningfully negative at a minimizer.
    pub vi_min: f64,
    pub vi_samples: usize,
}

/// Clamp to `[alpha, beta]` on the control region; zero elsewhere.
pub fn project_box(p: &ProblemSpec, w: &Control) -> Control {
    let mut out = Control::zeros(p);
    let omega: Vec<usize> = p.grid().omega_nodes().collect();
    for m in 1..=p.nt() {
        let src = w.step(m);
        let dst = out.step_mut(m);
        for &i in &omega {
            dst[i] = src[i].clamp(p.alpha(), p.beta());
        }
    }
    out
}

fn active_fractions(p: &ProblemSpec, u: &Control) -> (f64, f64, f64) {
    let omega: Vec<usize> = p.grid().omega_nodes().collect();
    let total = (omega.len() * p.nt()).max(1);
    let mut lower = 0usize;
    let mut upper = 0usize;
    for m in 1..=p.nt() {
        for &i in &omega {
            let v = u.step(m)[i];
            if v == p.alpha() {
                lower += 1;
            } else if v == p.beta() {
                upper += 1;
            }
        }
    }
    let t = total as f64;
    (
        lower as f64 / t,
        upper as f64 / t,
        (total - lower - upper) as f64 / t,
    )
}

/// Projected gradient descent from `start` (projected first). Returns the
/// final control and a report; non-convergence shows up in the report.
pub fn projected_gradient(
    p: &ProblemSpec,
    start: &Control,
    opts: &OptimizeOptions,
) -> Result<(Control, OptimizeReport), SolveError> {
    let grid = p.grid();
    let mut u = project_box(p, start);
    let mut ge = objective::gradient(p, &u)?;

    let mut residual_history = Vec::new();
    let mut cost_history = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;
    let mut line_search_failed = false;

    loop {
        let pulled = project_box(p, &u.add_scaled(-1.0, &ge.gradient));
        let residual = control_norm(grid, &u.add_scaled(-1.0, &pulled));
        residual_history.push(residual);
        cost_history.push(ge.cost.total);
        if residual <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }

        // The computed cost is only reproducible to rounding plus the
        // per-step fixed-point tolerance, so near the minimizer the true
        // decrease of a unit step (about `c1 * residual^2`) drops below what
        // a comparison of two cost values can resolve. Without the slack the
        // search would reject such steps, halve its way to a zero-length
        // move, and stall around `residual ~ sqrt(cost noise)`; with it the
        // unit step survives and the iteration contracts down to the
        // gradient's own noise floor. A step admitted only through the slack
        // carries no certificate, though — under heavy regularization it can
        // be expansive (its true increase hides below the slack) and trap the
        // iterate in a limit cycle above the tolerance. So slack admissions
        // must also not worsen the stationarity residual, the quantity the
        // stopping test watches; that costs one adjoint solve, which an
        // accepted step needs anyway.
        let noise = ge.cost.total.abs().max(1.0)
            * (8.0 * f64::EPSILON + 10.0 * p.solver().picard_tol);
        let mut step = 1.0f64;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let candidate = project_box(p, &u.add_scaled(-step, &ge.gradient));
            let direction = candidate.add_scaled(-1.0, &u);
            let slope = control_inner(grid, &ge.gradient, &direction);
            let y_trial = crate::state::solve_state(p, &candidate)?;
            let trial_cost = objective::cost_of_state(p, &y_trial, &candidate);
            let certified = trial_cost.total <= ge.cost.total + opts.armijo_c1 * slope;
            let within_noise =
                trial_cost.total <= ge.cost.total + opts.armijo_c1 * slope + noise;
            if certified {
                u = candidate;
                ge = objective::gradient_of_state(p, y_trial, &u)?;
                accepted = true;
                break;
            }
            if within_noise {
                let trial_ge = objective::gradient_of_state(p, y_trial, &candidate)?;
                let pulled =
                    project_box(p, &candidate.add_scaled(-1.0, &trial_ge.gradient));
                let trial_residual =
                    control_norm(grid, &candidate.add_scaled(-1.0, &pulled));
                if trial_residual <= residual {
                    u = candidate;
                    ge = trial_ge;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            line_search_failed = true;
            break;
        }
        iterations += 1;
    }

    let (active_lower_fraction, active_upper_fraction, inactive_fraction) =
        active_fractions(p, &u);

    let mut ssc_min_curvature = None;
    let mut ssc_directions_used = 0;
    if opts.ssc_directions > 0 {
        let directions =
            critical_cone_sample(p, &u, &ge.adjoint, opts.ssc_directions, opts.seed);
        ssc_directions_used = directions.len();
        if directions.is_empty() {
            diagnostics::warn(
                "critical cone sample came back empty; curvature figure omitted from report",
            );
        } else {
            let mut min = f64::INFINITY;
            for v in &directions {
                let h = objective::hessian_bilinear_with(p, &ge.state, &ge.adjoint, v, v)?;
                min = min.min(h);
            }
            ssc_min_curvature = Some(min);
        }
    }

    let report = OptimizeReport {
        iterations,
        converged,
        line_search_failed,
        final_cost: ge.cost,
        residual_history,
        cost_history,
        active_lower_fraction,
        active_upper_fraction,
        inactive_fraction,
        ssc_min_curvature,
        ssc_directions_used,
    };
    Ok((u, report))
}

/// Stationarity residual of the projection fixed point plus a sampled
/// variational-inequality probe.
pub fn kkt_residual(
    p: &ProblemSpec,
    u: &Control,
    vi_samples: usize,
    seed: u64,
) -> Result<KktReport, SolveError> {
    let grid = p.grid();
    let ge = objective::gradient(p, u)?;
    let qr = control_restriction(p, &ge.adjoint);
    let omega: Vec<usize> = grid.omega_nodes().collect();

    let mut candidate = Control::zeros(p);
    for m in 1..=p.nt() {
        let dst = candidate.step_mut(m);
        for &i in &omega {
            dst[i] = (-qr.step(m)[i] / p.mu()).clamp(p.alpha(), p.beta());
        }
    }
    let stationarity = control_norm(grid, &u.add_scaled(-1.0, &candidate));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vi_min = f64::INFINITY;
    for _ in 0..vi_samples {
        let mut v = Control::zeros(p);
        for m in 1..=p.nt() {
            let dst = v.step_mut(m);
            for &i in &omega {
                dst[i] = rng.gen_range(p.alpha()..p.beta());
            }
        }
        let value = control_inner(grid, &ge.gradient, &v.add_scaled(-1.0, u));
        vi_min = vi_min.min(value);
    }
    if vi_samples == 0 {
        vi_min = 0.0;
    }
    Ok(KktReport {
        stationarity,
        vi_min,
        vi_samples,
    })
}

/// Draw random directions and force them into the critical cone at `(u, q)`:
/// zero where the multiplier `mu u + q` is decisively nonzero, nonnegative at
/// the lower bound, nonpositive at the upper bound, free elsewhere. Directions
/// that survive are normalized; an empty result means the cone is numerically
/// trivial.
pub fn critical_cone_sample(
    p: &ProblemSpec,
    u: &Control,
    q: &Trajectory,
    count: usize,
    seed: u64,
) -> Vec<Control> {
    let grid = p.grid();
    let qr = control_restriction(p, q);
    let omega: Vec<usize> = grid.omega_nodes().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..count {
        let mut v = Control::zeros(p);
        for m in 1..=p.nt() {
            let dst = v.step_mut(m);
            for &i in &omega {
                let draw: f64 = rng.gen_range(-1.0..1.0);
                let g = p.mu() * u.step(m)[i] + qr.step(m)[i];
                dst[i] = if g.abs() > ACTIVITY_TOL {
                    0.0
                } else if u.step(m)[i] <= p.alpha() + ACTIVITY_TOL {
                    draw.abs()
                } else if u.step(m)[i] >= p.beta() - ACTIVITY_TOL {
                    -draw.abs()
                } else {
                    draw
                };
            }
        }
        let norm = control_norm(grid, &v);
        if norm > 0.0 {
            out.push(v.scale(1.0 / norm));
        }
    }
    out
}

/// Smallest curvature `J''(u)[v, v]` over the given directions; `+inf` when
/// there are none (vacuously positive, with a diagnostics note).
pub fn ssc_check(p: &ProblemSpec, u: &Control, directions: &[Control]) -> Result<f64, SolveError> {
    if directions.is_empty() {
        diagnostics::warn("no critical-cone directions supplied; curvature check is vacuous");
        return Ok(f64::INFINITY);
    }
    let y = crate::state::solve_state(p, u)?;
    let q = crate::adjoint::solve_adjoint(p, &y)?;
    let mut min = f64::INFINITY;
    for v in directions {
        let h = objective::hessian_bilinear_with(p, &y, &q, v, v)?;
        min = min.min(h);
    }
    Ok(min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, Grid, Interval};
    use crate::reaction::ReactionFunction;
    use crate::state::{solve_state, TargetSpec, TrajectoryKind};
    use crate::adjoint::solve_adjoint;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn quadratic_spec(mu: f64, alpha: f64, beta: f64) -> ProblemSpec {
        let n = 21;
        let grid = Grid::build(1.0, n, Interval::new(0.25, 0.75)).unwrap();
        ProblemSpec::new(
            grid,
            ReactionFunction::constant(1.0).unwrap(),
            Field::constant(n, 1.0),
            TargetSpec::Static(Field::constant(n, 0.25)),
            mu,
            1.0,
            30,
            alpha,
            beta,
        )
        .unwrap()
    }

    fn logistic_spec() -> ProblemSpec {
        let n = 21;
        let grid = Grid::build(1.0, n, Interval::new(0.25, 0.75)).unwrap();
        ProblemSpec::new(
            grid,
            ReactionFunction::logistic(0.5, 2.0, 1.0).unwrap(),
            Field::constant(n, 1.0),
            TargetSpec::Static(Field::constant(n, 0.3)),
            0.1,
            1.0,
            30,
            -2.0,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn projection_clamps_to_exact_bounds_and_zeroes_outside() {
        let p = quadratic_spec(0.5, -1.0, 1.0);
        let mut w = Control::zeros(&p);
        for m in 1..=p.nt() {
            for i in 0..p.grid().n() {
                w.step_mut(m)[i] = 3.0 * ((i + m) as f64).sin();
            }
        }
        let proj = project_box(&p, &w);
        for m in 1..=p.nt() {
            for i in 0..p.grid().n() {
                let v = proj.step(m)[i];
                if p.grid().in_omega(i) {
                    let orig = w.step(m)[i];
                    if orig < -1.0 {
                        assert_eq!(v, -1.0);
                    } else if orig > 1.0 {
                        assert_eq!(v, 1.0);
                    } else {
                        assert_eq!(v, orig);
                    }
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn converges_on_a_quadratic_instance_with_monotone_cost() {
        let p = quadratic_spec(0.5, -1.0, 1.0);
        let opts = OptimizeOptions::default();
        let (u, report) = projected_gradient(&p, &Control::zeros(&p), &opts).unwrap();
        assert!(report.converged, "{report:?}");
        assert!(report.iterations < 500);
        assert!(*report.residual_history.last().unwrap() <= opts.tol);
        assert!(u.admissible(&p));
        // Monotone up to the line search's noise allowance.
        for k in 1..report.cost_history.len() {
            assert!(
                report.cost_history[k] <= report.cost_history[k - 1] + 1e-10,
                "cost increased at iterate {k}"
            );
        }
        let sum = report.active_lower_fraction
            + report.active_upper_fraction
            + report.inactive_fraction;
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn antipodal_starts_reach_the_same_minimizer() {
        let p = quadratic_spec(0.5, -1.0, 1.0);
        let opts = OptimizeOptions {
            tol: 1e-7,
            ..OptimizeOptions::default()
        };
        let (u_low, r1) = projected_gradient(&p, &Control::constant(&p, -1.0), &opts).unwrap();
        let (u_high, r2) = projected_gradient(&p, &Control::constant(&p, 1.0), &opts).unwrap();
        assert!(r1.converged && r2.converged);
        let gap = control_norm(p.grid(), &u_low.add_scaled(-1.0, &u_high));
        assert!(gap <= 1e-4, "distinct minimizers? gap = {gap:e}");
    }

    #[test]
    fn heavy_regularization_pins_the_control_near_zero() {
        let p = quadratic_spec(1000.0, -1.0, 1.0);
        let opts = OptimizeOptions::default();
        let (u, report) = projected_gradient(&p, &Control::constant(&p, 0.5), &opts).unwrap();
        assert!(report.converged);
        let y = solve_state(&p, &u).unwrap();
        let q = solve_adjoint(&p, &y).unwrap();
        let grid = p.grid();
        let cylinder: f64 = (1..=p.nt())
            .map(|_| {
                p.dt()
                    * grid
                        .omega_nodes()
                        .map(|i| grid.weights()[i])
                        .sum::<f64>()
            })
            .sum();
        let bound = q.max_abs() / p.mu() * cylinder.sqrt();
        assert!(control_norm(grid, &u) <= bound * (1.0 + 1e-10));
    }

    #[test]
    fn kkt_residual_is_small_after_convergence() {
        let p = logistic_spec();
        let opts = OptimizeOptions::default();
        let (u, report) = projected_gradient(&p, &Control::zeros(&p), &opts).unwrap();
        assert!(report.converged);
        let kkt = kkt_residual(&p, &u, 20, 7).unwrap();
        assert!(
            kkt.stationarity <= 10.0 * opts.tol,
            "stationarity {:e}",
            kkt.stationarity
        );
    }

    #[test]
    fn cone_sampler_respects_the_sign_pattern() {
        let p = quadratic_spec(0.5, -1.0, 1.0);
        let nt = p.nt();
        let n = p.grid().n();
        let omega: Vec<usize> = p.grid().omega_nodes().collect();
        assert!(omega.len() >= 4);

        // Partition the control region into four behaviours.
        let group = |idx: usize| idx % 4;
        let mut u = Control::zeros(&p);
        for m in 1..=nt {
            for (pos, &i) in omega.iter().enumerate() {
                u.step_mut(m)[i] = match group(pos) {
                    0 => -1.0, // at lower bound, weakly active
                    1 => 1.0,  // at upper bound, weakly active
                    2 => 0.2,  // interior
                    _ => -1.0, // at lower bound, strongly active
                };
            }
        }
        // Multiplier slots chosen so mu*u + q is 0 except for group 3.
        let mut slots = vec![Field::zeros(n); nt + 1];
        for m in 1..=nt {
            for (pos, &i) in omega.iter().enumerate() {
                let g_target = if group(pos) == 3 { 1.0 } else { 0.0 };
                slots[m - 1][i] = g_target - p.mu() * u.step(m)[i];
            }
        }
        let q = Trajectory::from_levels(TrajectoryKind::Adjoint, p.dt(), slots);

        let dirs = critical_cone_sample(&p, &u, &q, 10, 99);
        assert_eq!(dirs.len(), 10);
        for v in &dirs {
            let norm = control_norm(p.grid(), v);
            assert!((norm - 1.0).abs() <= 1e-12);
            for m in 1..=nt {
                for (pos, &i) in omega.iter().enumerate() {
                    let val = v.step(m)[i];
                    match group(pos) {
                        0 => assert!(val >= 0.0),
                        1 => assert!(val <= 0.0),
                        2 => {}
                        _ => assert_eq!(val, 0.0),
                    }
                }
            }
        }
    }

    #[test]
    fn empty_direction_set_is_vacuously_positive() {
        let p = quadratic_spec(0.5, -1.0, 1.0);
        crate::diagnostics::drain();
        let min = ssc_check(&p, &Control::zeros(&p), &[]).unwrap();
        assert_eq!(min, f64::INFINITY);
        let msgs = crate::diagnostics::drain();
        assert!(msgs.iter().any(|m| m.contains("vacuous")));
    }

    #[test]
    fn hopeless_line_search_is_reported_not_crashed() {
        let p = quadratic_spec(30.0, -1.0, 1.0);
        let opts = OptimizeOptions {
            max_halvings: 0,
            ..OptimizeOptions::default()
        };
        let (_, report) = projected_gradient(&p, &Control::constant(&p, 1.0), &opts).unwrap();
        assert!(report.line_search_failed);
        assert!(!report.converged);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn projection_is_idempotent_and_admissible(seed in 0u64..500) {
            let p = quadratic_spec(0.5, -1.0, 1.0);
            let mut rng = StdRng::seed_from_u64(seed);
            let mut w = Control::zeros(&p);
            for m in 1..=p.nt() {
                for i in 0..p.grid().n() {
                    w.step_mut(m)[i] = rng.gen_range(-3.0..3.0);
                }
            }
            let once = project_box(&p, &w);
            let twice = project_box(&p, &once);
            prop_assert!(once.admissible(&p));
            prop_assert_eq!(&once, &twice);
        }
    }
}
