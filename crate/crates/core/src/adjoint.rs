//! Backward multiplier equation.
//!
//! The continuous multiplier solves
//!
//! ```text
//! -q_t - q_xx + a(∫y) q + a'(∫y) ∫ y q dx = y - y_d,   q(T) = 0,
//! ```
//!
//! with no-flux boundaries. Discretely we take the exact transpose of the
//! linearized forward step in the trapezoid-weighted inner product: the
//! forward coupling `(a'(l_m) y^m) ⊗ (w ·)` transposes to
//! `(a'(l_m) 1) ⊗ ((w ∘ y^m) ·)`, i.e. a spatially constant column paired
//! against the weighted state. Because the transpose is exact, summation by
//! parts holds to rounding:
//!
//! ```text
//! sum_m dt <z^m, g^m>_w  ==  sum_m dt <s^m, q_{m-1}>_w
//! ```
//!
//! for any source `s` driving the linearized state `z` and any `g` driving
//! the multiplier `q`. Slot `m - 1` of the returned trajectory holds the
//! multiplier attached to step `m`; slot `nt` is the zero terminal value.
//! Pair level-`m` quantities with slot `m - 1` — the gradient, the Hessian
//! and all dualities here do exactly that.

use crate::grid::Field;
use crate::linsolve::{self, RankOneCoupling};
use crate::state::{
    heat_step_operator, mass_profile, Control, ProblemSpec, SolveError, Trajectory,
    TrajectoryKind,
};

/// March the multiplier backwards from `q(T) = 0` with a general source.
pub fn solve_adjoint_with_source(
    p: &ProblemSpec,
    y: &Trajectory,
    source: &Trajectory,
) -> Result<Trajectory, SolveError> {
    let nt = p.nt();
    if y.nt() != nt {
        return Err(SolveError::TrajectoryLevels {
            got: y.nt() + 1,
            expected: nt + 1,
        });
    }
    if source.nt() != nt {
        return Err(SolveError::TrajectoryLevels {
            got: source.nt() + 1,
            expected: nt + 1,
        });
    }
    let grid = p.grid();
    let n = grid.n();
    let dt = p.dt();
    let masses = mass_profile(grid, y);
    let weights = grid.weights();

    let mut slots = vec![Field::zeros(n); nt + 1];
    for m in (1..=nt).rev() {
        let op = heat_step_operator(grid, dt, p.reaction().eval(masses[m]));
        let coupling = RankOneCoupling {
            col: vec![p.reaction().d1(masses[m]); n],
            row: weights
                .iter()
                .zip(y.level(m).values())
                .map(|(w, v)| w * v)
                .collect(),
        };
        let rhs: Vec<f64> = slots[m]
            .values()
            .iter()
            .zip(source.level(m).values())
            .map(|(q, g)| q / dt + g)
            .collect();
        let q = linsolve::solve_rank_one(&op, &coupling, &rhs)
            .map_err(|source| SolveError::Linear { step: m, source })?;
        slots[m - 1] = Field::from_values(q);
    }
    Ok(Trajectory::from_levels(TrajectoryKind::Adjoint, dt, slots))
}

/// Multiplier for the tracking objective: source `y^m - y_d^m`.
pub fn solve_adjoint(p: &ProblemSpec, y: &Trajectory) -> Result<Trajectory, SolveError> {
    let n = p.grid().n();
    let mut fields = Vec::with_capacity(p.nt() + 1);
    fields.push(Field::zeros(n));
    for m in 1..=p.nt() {
        fields.push(y.level(m).add_scaled(-1.0, p.target_at(m)));
    }
    let deviation = Trajectory::from_levels(TrajectoryKind::Source, p.dt(), fields);
    solve_adjoint_with_source(p, y, &deviation)
}

/// Restrict a multiplier to the control region, aligned with control steps:
/// step `m` of the result is slot `m - 1` of `q` on the region, zero outside.
pub fn control_restriction(p: &ProblemSpec, q: &Trajectory) -> Control {
    let omega: Vec<usize> = p.grid().omega_nodes().collect();
    let mut c = Control::zeros(p);
    for m in 1..=p.nt() {
        let slot = q.level(m - 1);
        for &i in &omega {
            c.step_mut(m)[i] = slot[i];
        }
    }
    c
}
