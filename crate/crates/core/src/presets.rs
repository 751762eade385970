//! Ready-made problem instances used by the CLI defaults, the examples in
//! the documentation, and the end-to-end tests.

use crate::grid::{Field, Grid, Interval};
use crate::reaction::ReactionFunction;
use crate::state::{ProblemSpec, TargetSpec};

/// Logistic reaction on the unit interval, controlled from the middle half.
///
/// The state starts at `1`, the target is the lower constant `0.3`, and the
/// reaction strengthens with the total mass (`0.5` to `2.0`, unit steepness),
/// so tracking the target means fighting both diffusion-free decay and the
/// mass feedback. The `[-1, 1]` box clips the unconstrained minimizer: early
/// on the optimal control pushes down hard enough to rest on the lower bound
/// (about 6% of the control cylinder), so the active-set machinery is
/// exercised without the instance being degenerate.
pub fn default_logistic() -> ProblemSpec {
    let n = 61;
    let grid = Grid::build(1.0, n, Interval::new(0.25, 0.75)).expect("preset grid is valid");
    ProblemSpec::new(
        grid,
        ReactionFunction::logistic(0.5, 2.0, 1.0).expect("preset reaction is valid"),
        Field::constant(n, 1.0),
        TargetSpec::Static(Field::constant(n, 0.3)),
        0.1,
        1.0,
        100,
        -1.0,
        1.0,
    )
    .expect("preset parameters are consistent")
}

/// Constant reaction, so the state map is affine and the objective is an
/// exact quadratic in the control. Useful as a regression instance: every
/// derivative identity holds to rounding rather than to a truncation order.
pub fn constant_quadratic() -> ProblemSpec {
    let n = 41;
    let grid = Grid::build(1.0, n, Interval::new(0.25, 0.75)).expect("preset grid is valid");
    ProblemSpec::new(
        grid,
        ReactionFunction::constant(1.0).expect("preset reaction is valid"),
        Field::constant(n, 1.0),
        TargetSpec::Static(Field::constant(n, 0.25)),
        0.5,
        1.0,
        80,
        -1.0,
        1.0,
    )
    .expect("preset parameters are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_and_have_a_proper_control_region() {
        for p in [default_logistic(), constant_quadratic()] {
            let inside = p.grid().omega_node_count();
            assert!(inside > 0 && inside < p.grid().n());
            assert!(p.alpha() < 0.0 && p.beta() > 0.0);
        }
    }

    #[test]
    fn preset_states_solve_without_incident() {
        for p in [default_logistic(), constant_quadratic()] {
            let y = crate::state::solve_state(&p, &crate::state::Control::zeros(&p)).unwrap();
            assert!(y.max_abs() <= 1.0 + 1e-12);
        }
    }
}
