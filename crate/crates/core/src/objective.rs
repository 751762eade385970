//! Tracking objective, its gradient and its second derivative.
//!
//! ```text
//! J(v) = 1/2 ||y(v) - y_d||^2_{L2(Q)} + mu/2 ||v||^2_{L2(omega_T)}
//! ```
//!
//! The gradient is assembled from the multiplier: `grad^m = mu v^m + q_{m-1}`
//! on the control region. Because the multiplier march is the exact discrete
//! transpose of the linearized step, this gradient is the derivative of the
//! discrete cost to rounding — finite-difference checks bottom out at solver
//! precision, not at discretization error.
//!
//! The second derivative in directions `(v, w)` is
//!
//! ```text
//! J''(u)[v, w] = sum_m dt <F^m, q_{m-1}>_w + <z_v, z_w>_{L2(Q)} + mu <v, w>_{omega_T}
//! ```
//!
//! where `z_v, z_w` are linearized states and `F` is the second-order source
//! of the state map ([`second_order_source`]). All three terms are symmetric
//! under swapping `v` and `w`, so the form is symmetric to the last bit.

use crate::adjoint::{control_restriction, solve_adjoint};
use crate::grid::Field;
use crate::state::{
    control_inner, second_order_source, solve_linearized, solve_state, source_multiplier_pairing,
    trajectory_inner, Control, ProblemSpec, SolveError, Trajectory, TrajectoryKind,
};
use serde::Serialize;

/// The two pieces of the objective and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub tracking: f64,
    pub regularization: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn new(tracking: f64, regularization: f64) -> Self {
        CostBreakdown {
            tracking,
            regularization,
            total: tracking + regularization,
        }
    }
}

/// Deviation trajectory `y^m - y_d^m` (zero at level 0, which the cost skips).
fn deviation(p: &ProblemSpec, y: &Trajectory) -> Trajectory {
    let n = p.grid().n();
    let mut fields = Vec::with_capacity(p.nt() + 1);
    fields.push(Field::zeros(n));
    for m in 1..=p.nt() {
        fields.push(y.level(m).add_scaled(-1.0, p.target_at(m)));
    }
    Trajectory::from_levels(TrajectoryKind::Source, p.dt(), fields)
}

/// Cost of a known state trajectory (no solve).
pub fn cost_of_state(p: &ProblemSpec, y: &Trajectory, v: &Control) -> CostBreakdown {
    let dev = deviation(p, y);
    let tracking = 0.5 * trajectory_inner(p.grid(), &dev, &dev);
    let regularization = 0.5 * p.mu() * control_inner(p.grid(), v, v);
    CostBreakdown::new(tracking, regularization)
}

/// Solve the state equation and evaluate the objective.
pub fn cost(p: &ProblemSpec, v: &Control) -> Result<CostBreakdown, SolveError> {
    let y = solve_state(p, v)?;
    Ok(cost_of_state(p, &y, v))
}

/// Gradient evaluation: everything computed on the way is returned so callers
/// can reuse the state and multiplier.
#[derive(Debug, Clone)]
pub struct GradientEval {
    /// `mu v + q` restricted to the control region.
    pub gradient: Control,
    pub cost: CostBreakdown,
    pub state: Trajectory,
    pub adjoint: Trajectory,
}

/// Objective value and gradient at `v`: one state solve plus one multiplier
/// solve.
pub fn gradient(p: &ProblemSpec, v: &Control) -> Result<GradientEval, SolveError> {
    let y = solve_state(p, v)?;
    gradient_of_state(p, y, v)
}

/// Gradient at `v` when its state trajectory is already in hand — only the
/// multiplier solve remains. Used by the optimizer to avoid re-solving the
/// state accepted by a line search.
pub fn gradient_of_state(
    p: &ProblemSpec,
    y: Trajectory,
    v: &Control,
) -> Result<GradientEval, SolveError> {
    let q = solve_adjoint(p, &y)?;
    let cost = cost_of_state(p, &y, v);
    let grad = control_restriction(p, &q).add_scaled(p.mu(), v);
    Ok(GradientEval {
        gradient: grad,
        cost,
        state: y,
        adjoint: q,
    })
}

/// Second derivative `J''(u)[v, w]` with the state and multiplier already
/// known; performs two linearized solves.
pub fn hessian_bilinear_with(
    p: &ProblemSpec,
    y: &Trajectory,
    q: &Trajectory,
    v: &Control,
    w: &Control,
) -> Result<f64, SolveError> {
    let zv = solve_linearized(p, y, v)?;
    let zw = solve_linearized(p, y, w)?;
    let f = second_order_source(p, y, &zv, &zw);
    Ok(source_multiplier_pairing(p.grid(), &f, q)
        + trajectory_inner(p.grid(), &zv, &zw)
        + p.mu() * control_inner(p.grid(), v, w))
}

/// Second derivative `J''(u)[v, w]` from scratch.
pub fn hessian_bilinear(
    p: &ProblemSpec,
    u: &Control,
    v: &Control,
    w: &Control,
) -> Result<f64, SolveError> {
    let y = solve_state(p, u)?;
    let q = solve_adjoint(p, &y)?;
    hessian_bilinear_with(p, &y, &q, v, w)
}
