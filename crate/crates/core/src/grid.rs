//! Uniform 1-D grid on [0, L] with no-flux (homogeneous Neumann) boundaries.
//!
//! Space is discretized with `n` nodes `x_i = i*h`, `h = L/(n-1)`. Integrals
//! use trapezoid weights (`h/2` at the ends, `h` inside), and the negative
//! Laplacian uses mirrored ghost nodes at both ends, so the boundary rows are
//! `(2 f_0 - 2 f_1)/h^2` and `(2 f_{n-1} - 2 f_{n-2})/h^2`. With this pairing
//! the operator is self-adjoint and positive semi-definite in the weighted
//! inner product `<f, g> = sum_i w_i f_i g_i`, which is what the adjoint and
//! gradient computations downstream rely on.

use crate::diagnostics;
use thiserror::Error;

/// Half-open interval `[lo, hi)` used for the control region.
///
/// One special case: when `hi` reaches the right end of the domain the last
/// grid node is included too, so `[0, L)` means "control everywhere".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("domain length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("control region [{lo}, {hi}) is not a sub-interval of the domain [0, {length}]")]
    BadOmega { lo: f64, hi: f64, length: f64 },
    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { got: usize, expected: usize },
}

/// Nodal values of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Field { values: vec![value; n] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Field { values }
    }

    /// Sample `f(x_i)` at every node of `grid`.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Field {
            values: (0..grid.n()).map(|i| f(grid.node(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `self + c * other`, elementwise.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Field {
        debug_assert_eq!(self.len(), other.len());
        Field {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Field {
        Field {
            values: self.values.iter().map(|a| c * a).collect(),
        }
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// Uniform grid with trapezoid quadrature weights and a marked control region.
#[derive(Debug, Clone)]
pub struct Grid {
    length: f64,
    n: usize,
    h: f64,
    weights: Vec<f64>,
    omega: Interval,
    omega_mask: Vec<bool>,
}

impl Grid {
    /// Build a grid over `[0, length]` with `n` nodes and control region `omega`.
    pub fn build(length: f64, n: usize, omega: Interval) -> Result<Grid, GridError> {
        if n < 3 {
            return Err(GridError::TooFewNodes(n));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(GridError::BadLength(length));
        }
        let valid_omega = omega.lo.is_finite()
            && omega.hi.is_finite()
            && omega.lo < omega.hi
            && omega.lo >= 0.0
            && omega.hi <= length;
        if !valid_omega {
            return Err(GridError::BadOmega {
                lo: omega.lo,
                hi: omega.hi,
                length,
            });
        }

        let h = length / (n - 1) as f64;
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;

        // Node membership in [lo, hi): ties within a relative epsilon of the
        // endpoints resolve to "include at lo, exclude at hi". A region whose
        // upper end reaches L keeps the last node so full-domain control
        // really covers every node.
        let eps = 1e-12 * length;
        let reaches_right_end = omega.hi >= length - eps;
        let omega_mask = (0..n)
            .map(|i| {
                let x = i as f64 * h;
                x >= omega.lo - eps && (reaches_right_end || x < omega.hi - eps)
            })
            .collect();

        Ok(Grid {
            length,
            n,
            h,
            weights,
            omega,
            omega_mask,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn omega(&self) -> Interval {
        self.omega
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// True if node `i` lies in the control region.
    pub fn in_omega(&self, i: usize) -> bool {
        self.omega_mask[i]
    }

    /// Indices of the nodes inside the control region.
    pub fn omega_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.omega_mask[i])
    }

    pub fn omega_node_count(&self) -> usize {
        self.omega_mask.iter().filter(|&&b| b).count()
    }

    fn check_len(&self, f: &Field) -> Result<(), GridError> {
        if f.len() != self.n {
            return Err(GridError::LengthMismatch {
                got: f.len(),
                expected: self.n,
            });
        }
        Ok(())
    }

    /// Apply the negative Laplacian with mirrored-ghost Neumann closure.
    pub fn laplacian_apply(&self, f: &Field) -> Result<Field, GridError> {
        self.check_len(f)?;
        let n = self.n;
        let s = 1.0 / (self.h * self.h);
        let v = f.values();
        let mut out = vec![0.0; n];
        out[0] = s * (2.0 * v[0] - 2.0 * v[1]);
        for i in 1..n - 1 {
            out[i] = s * (-v[i - 1] + 2.0 * v[i] - v[i + 1]);
        }
        out[n - 1] = s * (2.0 * v[n - 1] - 2.0 * v[n - 2]);
        Ok(Field::from_values(out))
    }

    /// Trapezoid quadrature of `f` over the whole domain.
    pub fn integrate(&self, f: &Field) -> Result<f64, GridError> {
        self.check_len(f)?;
        Ok(self
            .weights
            .iter()
            .zip(f.values())
            .map(|(w, v)| w * v)
            .sum())
    }

    /// Weighted inner product `sum_i w_i f_i g_i`.
    pub fn weighted_inner(&self, f: &Field, g: &Field) -> Result<f64, GridError> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(self
            .weights
            .iter()
            .zip(f.values().iter().zip(g.values()))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    /// Weighted L2 norm of `f`.
    pub fn weighted_norm(&self, f: &Field) -> Result<f64, GridError> {
        Ok(self.weighted_inner(f, f)?.sqrt())
    }

    /// Nodal indicator of the control region (1 inside, 0 outside).
    ///
    /// Warns on the diagnostics channel when the region contains no nodes,
    /// which happens when it is narrower than the mesh width.
    pub fn omega_indicator(&self) -> Field {
        if self.omega_node_count() == 0 {
            diagnostics::warn(format!(
                "control region [{}, {}) contains no grid nodes at h = {}; controls will have no effect",
                self.omega.lo, self.omega.hi, self.h
            ));
        }
        Field::from_values(
            self.omega_mask
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn unit_grid(n: usize) -> Grid {
        Grid::build(1.0, n, Interval::new(0.0, 1.0)).unwrap()
    }

    #[test]
    fn small_grid_has_expected_spacing_and_weights() {
        let g = unit_grid(3);
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn weights_sum_to_domain_length() {
        let g = Grid::build(2.0, 5, Interval::new(0.5, 1.5)).unwrap();
        assert_eq!(g.h(), 0.5);
        let total: f64 = g.weights().iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn build_rejects_degenerate_inputs() {
        assert_eq!(
            Grid::build(1.0, 2, Interval::new(0.0, 1.0)).unwrap_err(),
            GridError::TooFewNodes(2)
        );
        assert!(matches!(
            Grid::build(0.0, 5, Interval::new(0.0, 1.0)).unwrap_err(),
            GridError::BadLength(_)
        ));
        assert!(matches!(
            Grid::build(1.0, 5, Interval::new(0.5, 0.25)).unwrap_err(),
            GridError::BadOmega { .. }
        ));
        assert!(matches!(
            Grid::build(1.0, 5, Interval::new(0.0, 1.5)).unwrap_err(),
            GridError::BadOmega { .. }
        ));
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = unit_grid(17);
        let f = Field::constant(17, 3.25);
        let lap = g.laplacian_apply(&f).unwrap();
        assert_eq!(lap.max_abs(), 0.0);
    }

    #[test]
    fn laplacian_matches_cosine_eigenfunction() {
        // -(cos(pi x))'' = pi^2 cos(pi x), and cos has zero slope at both
        // ends, so the mirrored ghost closure is second-order accurate
        // uniformly in space.
        let g = unit_grid(201);
        let f = Field::from_fn(&g, |x| (std::f64::consts::PI * x).cos());
        let lap = g.laplacian_apply(&f).unwrap();
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut worst = 0.0f64;
        for i in 0..g.n() {
            let exact = pi2 * (std::f64::consts::PI * g.node(i)).cos();
            worst = worst.max((lap[i] - exact).abs());
        }
        assert!(worst <= 1e-3, "max error {worst} too large");
    }

    #[test]
    fn laplacian_unit_vector_gives_stencil_row() {
        let g = unit_grid(5);
        let mut e2 = Field::zeros(5);
        e2[2] = 1.0;
        let lap = g.laplacian_apply(&e2).unwrap();
        let s = 1.0 / (g.h() * g.h());
        assert_eq!(lap.values(), &[0.0, -s, 2.0 * s, -s, 0.0]);
    }

    #[test]
    fn laplacian_rejects_wrong_length() {
        let g = unit_grid(5);
        let f = Field::zeros(4);
        assert_eq!(
            g.laplacian_apply(&f).unwrap_err(),
            GridError::LengthMismatch { got: 4, expected: 5 }
        );
    }

    #[test]
    fn integrate_constant_is_exact() {
        let g = Grid::build(2.0, 9, Interval::new(0.0, 2.0)).unwrap();
        let f = Field::constant(9, 1.0);
        assert!((g.integrate(&f).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn integrate_linear_is_exact() {
        let g = unit_grid(7);
        let f = Field::from_fn(&g, |x| x);
        assert!((g.integrate(&f).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn integrate_quadratic_is_second_order() {
        let g = unit_grid(101);
        let f = Field::from_fn(&g, |x| x * x);
        let err = (g.integrate(&f).unwrap() - 1.0 / 3.0).abs();
        assert!(err <= 1e-4, "trapezoid error {err} too large");
    }

    #[test]
    fn indicator_full_domain_is_all_ones() {
        let g = unit_grid(11);
        let ind = g.omega_indicator();
        assert!(ind.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn indicator_is_half_open_on_interior_regions() {
        let g = Grid::build(2.0, 5, Interval::new(0.5, 1.5)).unwrap();
        let ind = g.omega_indicator();
        assert_eq!(ind.values(), &[0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn indicator_warns_when_region_misses_every_node() {
        diagnostics::drain();
        let g = Grid::build(1.0, 3, Interval::new(0.26, 0.27)).unwrap();
        let ind = g.omega_indicator();
        assert!(ind.values().iter().all(|&v| v == 0.0));
        let msgs = diagnostics::drain();
        assert!(
            msgs.iter().any(|m| m.contains("[0.26, 0.27)")),
            "expected an empty-support warning, got {msgs:?}"
        );
    }

    #[test]
    fn laplacian_is_self_adjoint_and_psd_in_weighted_product() {
        let mut rng = StdRng::seed_from_u64(7);
        let g = unit_grid(33);
        for _ in 0..10 {
            let f = Field::from_values((0..33).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let gfun = Field::from_values((0..33).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let af = g.laplacian_apply(&f).unwrap();
            let ag = g.laplacian_apply(&gfun).unwrap();
            let lhs = g.weighted_inner(&af, &gfun).unwrap();
            let rhs = g.weighted_inner(&f, &ag).unwrap();
            let scale = 1.0 + lhs.abs().max(rhs.abs());
            assert!((lhs - rhs).abs() <= 1e-10 * scale);
            let quad = g.weighted_inner(&af, &f).unwrap();
            assert!(quad >= -1e-10 * (1.0 + quad.abs()));
        }
    }

    proptest! {
        #[test]
        fn self_adjointness_holds_for_random_fields(
            n in 3usize..40,
            seed in 0u64..1000,
        ) {
            let g = unit_grid(n);
            let mut rng = StdRng::seed_from_u64(seed);
            let f = Field::from_values((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let q = Field::from_values((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let af = g.laplacian_apply(&f).unwrap();
            let aq = g.laplacian_apply(&q).unwrap();
            let lhs = g.weighted_inner(&af, &q).unwrap();
            let rhs = g.weighted_inner(&f, &aq).unwrap();
            let scale = 1.0 + lhs.abs().max(rhs.abs());
            prop_assert!((lhs - rhs).abs() <= 1e-9 * scale * (n as f64) * (n as f64));
        }

        #[test]
        fn masked_integral_is_dominated_by_absolute_integral(
            seed in 0u64..1000,
        ) {
            let g = Grid::build(1.0, 21, Interval::new(0.3, 0.8)).unwrap();
            let mut rng = StdRng::seed_from_u64(seed);
            let f = Field::from_values((0..21).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let ind = g.omega_indicator();
            let masked = Field::from_values(
                f.values().iter().zip(ind.values()).map(|(a, b)| a * b).collect(),
            );
            let abs = Field::from_values(f.values().iter().map(|a| a.abs()).collect());
            prop_assert!(g.integrate(&masked).unwrap() <= g.integrate(&abs).unwrap() + 1e-12);
        }
    }
}
