//! The controlled state equation and its linearizations.
//!
//! The model is a 1-D reaction-diffusion equation whose reaction coefficient
//! is driven by the total mass of the state:
//!
//! ```text
//! y_t - y_xx + a(∫ y dx) y = v χ_ω   on (0, L) x (0, T],
//! no-flux boundaries,  y(0) = y0.
//! ```
//!
//! Time stepping is backward Euler. Each step freezes the mass integral,
//! solves the resulting tridiagonal system, recomputes the mass and repeats
//! until the mass settles (a contraction for any step size because `a` has a
//! bounded derivative and the step operator is an M-matrix). If the fixed
//! point stalls the step is halved locally and retried.
//!
//! The linearized equation adds the rank-one coupling
//! `a'(∫y) y ∫z` and is solved per step with Sherman-Morrison; its transpose
//! (taken in the trapezoid-weighted inner product) is what the adjoint module
//! marches backwards. Keeping the discrete pairing exact is what makes the
//! gradient and Hessian checks downstream hit solver precision instead of
//! discretization error.

use crate::grid::{Field, Grid};
use crate::linsolve::{self, LinSolveError, LocalOperator, RankOneCoupling};
use crate::reaction::ReactionFunction;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("regularization weight mu must be positive and finite, got {0}")]
    BadMu(f64),
    #[error("control bounds must satisfy alpha < beta, got [{alpha}, {beta}]")]
    BadBounds { alpha: f64, beta: f64 },
    #[error("time horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("need at least one time step")]
    NoTimeSteps,
    #[error("initial state has {got} values but the grid has {expected} nodes")]
    InitialStateLength { got: usize, expected: usize },
    #[error("initial state contains a non-finite value")]
    InitialStateNotFinite,
    #[error("target trajectory has {got} levels but the problem has {expected}")]
    TargetLevels { got: usize, expected: usize },
    #[error("target field has {got} values but the grid has {expected} nodes")]
    TargetLength { got: usize, expected: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error(
        "mass fixed point failed to settle at step {step} (last update {residual:e}) \
         after {halvings} local step halvings"
    )]
    PicardDiverged {
        step: usize,
        residual: f64,
        halvings: usize,
    },
    #[error("linear solve failed at step {step}: {source}")]
    Linear {
        step: usize,
        #[source]
        source: LinSolveError,
    },
    #[error("control has {got} steps but the problem has {expected}")]
    ControlSteps { got: usize, expected: usize },
    #[error("control field at step {step} has {got} values but the grid has {expected} nodes")]
    ControlLength {
        step: usize,
        got: usize,
        expected: usize,
    },
    #[error("trajectory has {got} levels but the problem expects {expected}")]
    TrajectoryLevels { got: usize, expected: usize },
    #[error("frozen mass sequence has {got} entries but the problem expects {expected}")]
    FrozenMassLength { got: usize, expected: usize },
}

/// Tolerances for the per-step mass fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative tolerance on the mass update `|l_{k+1} - l_k| <= tol (1 + |l_k|)`.
    pub picard_tol: f64,
    /// Iteration cap per step before the step is halved.
    pub picard_max_iters: usize,
    /// How many times a stalling step may be halved before giving up.
    pub max_step_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            picard_tol: 1e-12,
            picard_max_iters: 50,
            max_step_halvings: 10,
        }
    }
}

/// Desired state: either one field tracked at every time level, or a full
/// trajectory with `nt + 1` levels (level 0 is carried but never enters the
/// cost, which sums over levels 1..nt).
#[derive(Debug, Clone)]
pub enum TargetSpec {
    Static(Field),
    PerLevel(Vec<Field>),
}

/// Everything that defines one control problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    grid: Grid,
    reaction: ReactionFunction,
    y0: Field,
    target: TargetSpec,
    mu: f64,
    horizon: f64,
    nt: usize,
    alpha: f64,
    beta: f64,
    solver: SolverOptions,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid,
        reaction: ReactionFunction,
        y0: Field,
        target: TargetSpec,
        mu: f64,
        horizon: f64,
        nt: usize,
        alpha: f64,
        beta: f64,
    ) -> Result<Self, SpecError> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(SpecError::BadMu(mu));
        }
        if !(alpha.is_finite() && beta.is_finite() && alpha < beta) {
            return Err(SpecError::BadBounds { alpha, beta });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SpecError::BadHorizon(horizon));
        }
        if nt == 0 {
            return Err(SpecError::NoTimeSteps);
        }
        if y0.len() != grid.n() {
            return Err(SpecError::InitialStateLength {
                got: y0.len(),
                expected: grid.n(),
            });
        }
        if y0.values().iter().any(|v| !v.is_finite()) {
            return Err(SpecError::InitialStateNotFinite);
        }
        match &target {
            TargetSpec::Static(f) => {
                if f.len() != grid.n() {
                    return Err(SpecError::TargetLength {
                        got: f.len(),
                        expected: grid.n(),
                    });
                }
            }
            TargetSpec::PerLevel(levels) => {
                if levels.len() != nt + 1 {
                    return Err(SpecError::TargetLevels {
                        got: levels.len(),
                        expected: nt + 1,
                    });
                }
                for f in levels {
                    if f.len() != grid.n() {
                        return Err(SpecError::TargetLength {
                            got: f.len(),
                            expected: grid.n(),
                        });
                    }
                }
            }
        }
        Ok(ProblemSpec {
            grid,
            reaction,
            y0,
            target,
            mu,
            horizon,
            nt,
            alpha,
            beta,
            solver: SolverOptions::default(),
        })
    }

    pub fn with_solver_options(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn reaction(&self) -> &ReactionFunction {
        &self.reaction
    }

    pub fn initial_state(&self) -> &Field {
        &self.y0
    }

    pub fn target_at(&self, level: usize) -> &Field {
        match &self.target {
            TargetSpec::Static(f) => f,
            TargetSpec::PerLevel(levels) => &levels[level],
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn solver(&self) -> SolverOptions {
        self.solver
    }
}

/// What a [`Trajectory`] holds, recorded so exports and debugging stay honest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Solution of the nonlinear state equation.
    State,
    /// Solution of a frozen-coefficient linear equation.
    GeneralLinear,
    /// Directional derivative of the state with respect to the control.
    Linearized,
    /// Second directional derivative of the state.
    SecondLinearized,
    /// Backward multiplier; slot `m` approximates the multiplier at time `t_m`,
    /// with the terminal slot `nt` equal to zero.
    Adjoint,
    /// A source term or other derived time series.
    Source,
}

/// Time series of fields at levels `0..=nt`, `t_m = m * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    fields: Vec<Field>,
    dt: f64,
    kind: TrajectoryKind,
}

impl Trajectory {
    pub fn from_levels(kind: TrajectoryKind, dt: f64, fields: Vec<Field>) -> Self {
        assert!(!fields.is_empty(), "a trajectory needs at least one level");
        Trajectory { fields, dt, kind }
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time steps (`levels - 1`).
    pub fn nt(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    pub fn level(&self, m: usize) -> &Field {
        &self.fields[m]
    }

    pub fn levels(&self) -> &[Field] {
        &self.fields
    }

    pub fn max_abs(&self) -> f64 {
        self.fields.iter().fold(0.0, |acc, f| acc.max(f.max_abs()))
    }

    pub fn max_abs_per_level(&self) -> Vec<f64> {
        self.fields.iter().map(Field::max_abs).collect()
    }
}

/// Control values at steps `1..=nt` (stored at index `m - 1`), zero outside
/// the control region by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    steps: Vec<Field>,
    dt: f64,
}

impl Control {
    pub fn zeros(p: &ProblemSpec) -> Self {
        Control {
            steps: vec![Field::zeros(p.grid().n()); p.nt()],
            dt: p.dt(),
        }
    }

    /// Constant value on the control region, zero elsewhere.
    pub fn constant(p: &ProblemSpec, value: f64) -> Self {
        Self::from_profile(p, |_, _| value)
    }

    /// Sample `f(t_m, x_i)` on the control region, zero elsewhere.
    pub fn from_profile(p: &ProblemSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let grid = p.grid();
        let dt = p.dt();
        let steps = (1..=p.nt())
            .map(|m| {
                let t = m as f64 * dt;
                let mut fld = Field::zeros(grid.n());
                for i in grid.omega_nodes() {
                    fld[i] = f(t, grid.node(i));
                }
                fld
            })
            .collect();
        Control { steps, dt }
    }

    /// Spatially uniform value `g(t_m)` on the control region.
    pub fn from_time_profile(p: &ProblemSpec, g: impl Fn(f64) -> f64) -> Self {
        Self::from_profile(p, |t, _| g(t))
    }

    pub fn nt(&self) -> usize {
        self.steps.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Field applied during step `m` (1-based).
    pub fn step(&self, m: usize) -> &Field {
        &self.steps[m - 1]
    }

    pub fn step_mut(&mut self, m: usize) -> &mut Field {
        &mut self.steps[m - 1]
    }

    pub fn steps(&self) -> &[Field] {
        &self.steps
    }

    /// `self + c * other`, elementwise over all steps.
    pub fn add_scaled(&self, c: f64, other: &Control) -> Control {
        debug_assert_eq!(self.nt(), other.nt());
        Control {
            steps: self
                .steps
                .iter()
                .zip(&other.steps)
                .map(|(a, b)| a.add_scaled(c, b))
                .collect(),
            dt: self.dt,
        }
    }

    pub fn scale(&self, c: f64) -> Control {
        Control {
            steps: self.steps.iter().map(|f| f.scale(c)).collect(),
            dt: self.dt,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.steps.iter().fold(0.0, |acc, f| acc.max(f.max_abs()))
    }

    /// True when every value on the control region lies in `[alpha, beta]`.
    pub fn admissible(&self, p: &ProblemSpec) -> bool {
        self.steps.iter().all(|f| {
            p.grid()
                .omega_nodes()
                .all(|i| f[i] >= p.alpha() && f[i] <= p.beta())
        })
    }

    /// View the control as a source trajectory (zero at level 0).
    pub fn as_source(&self, p: &ProblemSpec) -> Trajectory {
        let mut fields = Vec::with_capacity(self.nt() + 1);
        fields.push(Field::zeros(p.grid().n()));
        fields.extend(self.steps.iter().cloned());
        Trajectory::from_levels(TrajectoryKind::Source, self.dt, fields)
    }

    fn check_shape(&self, p: &ProblemSpec) -> Result<(), SolveError> {
        if self.nt() != p.nt() {
            return Err(SolveError::ControlSteps {
                got: self.nt(),
                expected: p.nt(),
            });
        }
        for (idx, f) in self.steps.iter().enumerate() {
            if f.len() != p.grid().n() {
                return Err(SolveError::ControlLength {
                    step: idx + 1,
                    got: f.len(),
                    expected: p.grid().n(),
                });
            }
        }
        Ok(())
    }
}

/// Discrete `L2(Q)` inner product over levels `1..=nt`:
/// `sum_m dt * sum_i w_i a_i b_i`.
pub fn trajectory_inner(grid: &Grid, a: &Trajectory, b: &Trajectory) -> f64 {
    debug_assert_eq!(a.nt(), b.nt());
    let dt = a.dt();
    (1..=a.nt())
        .map(|m| dt * grid.weighted_inner(a.level(m), b.level(m)).expect("level sized by grid"))
        .sum()
}

pub fn trajectory_norm(grid: &Grid, a: &Trajectory) -> f64 {
    trajectory_inner(grid, a, a).sqrt()
}

/// Discrete `L2` inner product over the control cylinder (control region x time).
pub fn control_inner(grid: &Grid, a: &Control, b: &Control) -> f64 {
    debug_assert_eq!(a.nt(), b.nt());
    let dt = a.dt();
    let w = grid.weights();
    let mut total = 0.0;
    for m in 1..=a.nt() {
        let (fa, fb) = (a.step(m), b.step(m));
        let mut level = 0.0;
        for i in grid.omega_nodes() {
            level += w[i] * fa[i] * fb[i];
        }
        total += dt * level;
    }
    total
}

pub fn control_norm(grid: &Grid, a: &Control) -> f64 {
    control_inner(grid, a, a).sqrt()
}

/// Pair a source trajectory with a backward multiplier:
/// `sum_{m=1..nt} dt * <f^m, q_{m-1}>_w`, where slot `m - 1` of the
/// multiplier belongs to step `m`. This is the discrete duality used by the
/// gradient and the Hessian.
pub fn source_multiplier_pairing(grid: &Grid, f: &Trajectory, q: &Trajectory) -> f64 {
    debug_assert_eq!(f.nt(), q.nt());
    let dt = f.dt();
    (1..=f.nt())
        .map(|m| {
            dt * grid
                .weighted_inner(f.level(m), q.level(m - 1))
                .expect("level sized by grid")
        })
        .sum()
}

/// Tridiagonal operator of one implicit step: `(1/dt) I + A_h + shift I`.
pub fn heat_step_operator(grid: &Grid, dt: f64, shift: f64) -> LocalOperator {
    let n = grid.n();
    let s = 1.0 / (grid.h() * grid.h());
    let d = 1.0 / dt + shift + 2.0 * s;
    let diag = vec![d; n];
    let mut sub = vec![-s; n - 1];
    let mut sup = vec![-s; n - 1];
    sup[0] = -2.0 * s;
    sub[n - 2] = -2.0 * s;
    LocalOperator::new(sub, diag, sup).expect("heat step operator is diagonally dominant")
}

fn step_rhs(prev: &Field, dt: f64, source: &Field) -> Vec<f64> {
    prev.values()
        .iter()
        .zip(source.values())
        .map(|(y, s)| y / dt + s)
        .collect()
}

/// One backward Euler step with the mass integral frozen per iteration.
/// Returns the accepted field, or the final mass residual if the fixed point
/// stalled.
fn picard_step(
    grid: &Grid,
    reaction: &ReactionFunction,
    prev: &Field,
    source: &Field,
    dt: f64,
    opts: &SolverOptions,
    step: usize,
) -> Result<Result<Field, f64>, SolveError> {
    let rhs = step_rhs(prev, dt, source);
    let mut mass = grid.integrate(prev).expect("field sized by grid");
    let mut residual = f64::INFINITY;
    for _ in 0..opts.picard_max_iters {
        let op = heat_step_operator(grid, dt, reaction.eval(mass));
        let y = linsolve::solve_local(&op, &rhs)
            .map_err(|source| SolveError::Linear { step, source })?;
        let y = Field::from_values(y);
        let new_mass = grid.integrate(&y).expect("field sized by grid");
        residual = (new_mass - mass).abs();
        if residual <= opts.picard_tol * (1.0 + mass.abs()) {
            return Ok(Ok(y));
        }
        mass = new_mass;
    }
    Ok(Err(residual))
}

/// Advance one step, halving the local step size when the fixed point stalls.
fn advance_step(
    grid: &Grid,
    reaction: &ReactionFunction,
    prev: &Field,
    source: &Field,
    dt: f64,
    opts: &SolverOptions,
    step: usize,
    depth: usize,
) -> Result<Field, SolveError> {
    match picard_step(grid, reaction, prev, source, dt, opts, step)? {
        Ok(y) => Ok(y),
        Err(residual) => {
            if depth >= opts.max_step_halvings {
                return Err(SolveError::PicardDiverged {
                    step,
                    residual,
                    halvings: depth,
                });
            }
            let half = 0.5 * dt;
            let mid = advance_step(grid, reaction, prev, source, half, opts, step, depth + 1)?;
            advance_step(grid, reaction, &mid, source, half, opts, step, depth + 1)
        }
    }
}

/// March the nonlinear state equation over the whole horizon.
pub fn solve_state(p: &ProblemSpec, v: &Control) -> Result<Trajectory, SolveError> {
    v.check_shape(p)?;
    let grid = p.grid();
    let opts = p.solver();
    let dt = p.dt();
    let mut fields = Vec::with_capacity(p.nt() + 1);
    fields.push(p.initial_state().clone());
    for m in 1..=p.nt() {
        let next = advance_step(
            grid,
            p.reaction(),
            &fields[m - 1],
            v.step(m),
            dt,
            &opts,
            m,
            0,
        )?;
        fields.push(next);
    }
    Ok(Trajectory::from_levels(TrajectoryKind::State, dt, fields))
}

/// March the frozen-coefficient linear equation
/// `(z^m - z^{m-1})/dt + A_h z^m + a(l_m) z^m + (atilde^m) ∫ z^m = f^m`
/// with prescribed mass values `l_m`, coupling fields `atilde^m` and sources
/// `f^m` (levels 1..nt of the given trajectories).
pub fn solve_general_linear(
    p: &ProblemSpec,
    frozen_mass: &[f64],
    coupling: &Trajectory,
    source: &Trajectory,
    z0: &Field,
) -> Result<Trajectory, SolveError> {
    let grid = p.grid();
    let nt = p.nt();
    if frozen_mass.len() != nt + 1 {
        return Err(SolveError::FrozenMassLength {
            got: frozen_mass.len(),
            expected: nt + 1,
        });
    }
    if coupling.nt() != nt {
        return Err(SolveError::TrajectoryLevels {
            got: coupling.nt() + 1,
            expected: nt + 1,
        });
    }
    if source.nt() != nt {
        return Err(SolveError::TrajectoryLevels {
            got: source.nt() + 1,
            expected: nt + 1,
        });
    }
    let dt = p.dt();
    let weights = grid.weights().to_vec();
    let mut fields = Vec::with_capacity(nt + 1);
    fields.push(z0.clone());
    for m in 1..=nt {
        let op = heat_step_operator(grid, dt, p.reaction().eval(frozen_mass[m]));
        let rank_one = RankOneCoupling {
            col: coupling.level(m).values().to_vec(),
            row: weights.clone(),
        };
        let rhs = step_rhs(&fields[m - 1], dt, source.level(m));
        let z = linsolve::solve_rank_one(&op, &rank_one, &rhs)
            .map_err(|source| SolveError::Linear { step: m, source })?;
        fields.push(Field::from_values(z));
    }
    Ok(Trajectory::from_levels(
        TrajectoryKind::GeneralLinear,
        dt,
        fields,
    ))
}

/// Mass values `∫ y^m dx` for every level of a trajectory.
pub fn mass_profile(grid: &Grid, y: &Trajectory) -> Vec<f64> {
    y.levels()
        .iter()
        .map(|f| grid.integrate(f).expect("level sized by grid"))
        .collect()
}

/// Directional derivative of the state map at `y = state(u)` in direction `v`:
/// marches `z_t + A_h z + a(l) z + a'(l) y ∫z = v χ_ω`, `z(0) = 0`.
pub fn solve_linearized(
    p: &ProblemSpec,
    y: &Trajectory,
    v: &Control,
) -> Result<Trajectory, SolveError> {
    v.check_shape(p)?;
    if y.nt() != p.nt() {
        return Err(SolveError::TrajectoryLevels {
            got: y.nt() + 1,
            expected: p.nt() + 1,
        });
    }
    let grid = p.grid();
    let masses = mass_profile(grid, y);
    let coupling_fields = y
        .levels()
        .iter()
        .zip(&masses)
        .map(|(f, &l)| f.scale(p.reaction().d1(l)))
        .collect();
    let coupling = Trajectory::from_levels(TrajectoryKind::Source, p.dt(), coupling_fields);
    let source = v.as_source(p);
    let z0 = Field::zeros(grid.n());
    let z = solve_general_linear(p, &masses, &coupling, &source, &z0)?;
    Ok(Trajectory::from_levels(
        TrajectoryKind::Linearized,
        z.dt(),
        z.levels().to_vec(),
    ))
}

/// Source term of the second linearization in directions `(zv, zw)`:
/// `-[ a'(l)(zv ∫zw + zw ∫zv) + a''(l) y ∫zv ∫zw ]` per level, zero at level 0.
pub fn second_order_source(
    p: &ProblemSpec,
    y: &Trajectory,
    zv: &Trajectory,
    zw: &Trajectory,
) -> Trajectory {
    let grid = p.grid();
    let n = grid.n();
    let mut fields = Vec::with_capacity(p.nt() + 1);
    fields.push(Field::zeros(n));
    for m in 1..=p.nt() {
        let mass = grid.integrate(y.level(m)).expect("level sized by grid");
        let d1 = p.reaction().d1(mass);
        let d2 = p.reaction().d2(mass);
        let int_zv = grid.integrate(zv.level(m)).expect("level sized by grid");
        let int_zw = grid.integrate(zw.level(m)).expect("level sized by grid");
        let mut f = Field::zeros(n);
        for i in 0..n {
            f[i] = -(d1 * (zv.level(m)[i] * int_zw + zw.level(m)[i] * int_zv)
                + d2 * y.level(m)[i] * int_zv * int_zw);
        }
        fields.push(f);
    }
    Trajectory::from_levels(TrajectoryKind::Source, p.dt(), fields)
}

/// Second directional derivative of the state map: same frozen-coefficient
/// operator as the first linearization, driven by [`second_order_source`].
pub fn solve_second_linearization(
    p: &ProblemSpec,
    y: &Trajectory,
    zv: &Trajectory,
    zw: &Trajectory,
) -> Result<Trajectory, SolveError> {
    let grid = p.grid();
    let masses = mass_profile(grid, y);
    let coupling_fields = y
        .levels()
        .iter()
        .zip(&masses)
        .map(|(f, &l)| f.scale(p.reaction().d1(l)))
        .collect();
    let coupling = Trajectory::from_levels(TrajectoryKind::Source, p.dt(), coupling_fields);
    let source = second_order_source(p, y, zv, zw);
    let z0 = Field::zeros(grid.n());
    let z = solve_general_linear(p, &masses, &coupling, &source, &z0)?;
    Ok(Trajectory::from_levels(
        TrajectoryKind::SecondLinearized,
        z.dt(),
        z.levels().to_vec(),
    ))
}
