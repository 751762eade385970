//! Optimal control of a one-dimensional reaction-diffusion equation whose
//! reaction coefficient responds to the total mass of the state.
//!
//! The governing equation on `(0, L) x (0, T)` is
//!
//! ```text
//! y_t - y_xx + a(∫ y dx) y = v 1_ω,    y_x = 0 at both ends,    y(0) = y0,
//! ```
//!
//! with the control `v` acting on a subregion `ω` and constrained to a box
//! `[alpha, beta]`. The objective is quadratic tracking of a target plus
//! Tikhonov regularization. The integral inside `a(·)` makes the coupling
//! nonlocal: every node feels the total mass, which turns the per-step
//! Jacobian into "tridiagonal plus rank one" and is the reason the linear
//! algebra here is Thomas elimination dressed with a Sherman-Morrison update
//! rather than a plain banded solve.
//!
//! The pieces, bottom up:
//!
//! - [`grid`]: uniform mesh, trapezoid quadrature, and the mirrored-ghost
//!   Neumann Laplacian, self-adjoint in the quadrature inner product.
//! - [`reaction`]: the admissible coefficient families (constant, logistic,
//!   smooth clamp) with certified bounds on their first two derivatives.
//! - [`linsolve`]: the tridiagonal and rank-one-updated direct solvers.
//! - [`state`]: the implicit march for the nonlinear state equation (frozen
//!   mass fixed point per step) and its first and second linearizations.
//! - [`adjoint`]: the exact transpose of the linearized march, giving
//!   multipliers that satisfy the discrete duality identity to rounding.
//! - [`objective`]: cost, gradient, and an exact Hessian bilinear form.
//! - [`optimizer`]: projected gradient with Armijo backtracking over the
//!   control box, first-order (KKT) residuals, and sampled second-order
//!   (critical-cone curvature) checks.
//! - [`verify`]: independent oracles — dense elimination, Runge-Kutta on the
//!   uniform reduction, difference quotients, refinement studies — bundled
//!   into a pass/fail report.
//! - [`io`]: deterministic full-precision CSV and JSON artifacts.
//! - [`presets`]: ready-made instances used by the CLI and the tests.
//!
//! Conventions used throughout: time levels are `0..=nt` with spacing
//! `dt = T / nt`; controls live on steps `1..=nt` (step `m` drives the level
//! `m - 1 -> m` update); a backward multiplier stored at slot `m - 1` pairs
//! with sources at step `m`. All inner products are the weighted discrete
//! `L2` products, so adjointness statements hold exactly in floating point
//! rather than up to quadrature error.

pub mod adjoint;
pub mod diagnostics;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod objective;
pub mod optimizer;
pub mod presets;
pub mod reaction;
pub mod state;
pub mod verify;

pub use adjoint::{control_restriction, solve_adjoint, solve_adjoint_with_source};
pub use grid::{Field, Grid, GridError, Interval};
pub use linsolve::{solve_local, solve_rank_one, LinSolveError, LocalOperator, RankOneCoupling};
pub use objective::{
    cost, cost_of_state, gradient, hessian_bilinear, CostBreakdown, GradientEval,
};
pub use optimizer::{
    critical_cone_sample, kkt_residual, project_box, projected_gradient, ssc_check, KktReport,
    OptimizeOptions, OptimizeReport,
};
pub use reaction::{ReactionError, ReactionFunction, ValidationReport};
pub use state::{
    solve_linearized, solve_state, Control, ProblemSpec, SolveError, SolverOptions, SpecError,
    TargetSpec, Trajectory, TrajectoryKind,
};
pub use verify::{run_verification, VerificationReport};
