//! Direct solvers for the per-time-step linear systems.
//!
//! Every implicit step of the solver needs `(I/tau + A_h + a I) x = rhs`, a
//! symmetric tridiagonal and strictly diagonally dominant system. The
//! linearized and adjoint steps add a rank-one coupling `col ⊗ (row ·)` that
//! carries the mass-integral term. The tridiagonal core is solved with the
//! Thomas algorithm in O(n); the rank-one update is folded in with the
//! Sherman-Morrison formula, i.e. two tridiagonal solves and a dot product,
//! never a dense factorization.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinSolveError {
    #[error("operator bands have inconsistent lengths: diag {diag}, sub {sub}, super {sup}")]
    ShapeMismatch { diag: usize, sub: usize, sup: usize },
    #[error("vector has length {got}, operator has dimension {expected}")]
    VectorLength { got: usize, expected: usize },
    #[error("diagonal entry {index} is not positive: {value}")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("row {index} is not diagonally dominant")]
    NotDiagonallyDominant { index: usize },
    #[error("zero pivot while eliminating row {index}")]
    ZeroPivot { index: usize },
    #[error("rank-one update is numerically singular (denominator {denominator:e})")]
    SingularUpdate { denominator: f64 },
}

/// Tridiagonal operator for one implicit step, `(1/tau) I + A_h + D`.
///
/// `sub` and `sup` hold the `n - 1` off-diagonal entries. Rows must be
/// weakly diagonally dominant with a positive diagonal; assembled heat steps
/// always have the strict margin `1/tau + a(r) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl LocalOperator {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Result<Self, LinSolveError> {
        let n = diag.len();
        if n == 0 || sub.len() != n - 1 || sup.len() != n - 1 {
            return Err(LinSolveError::ShapeMismatch {
                diag: n,
                sub: sub.len(),
                sup: sup.len(),
            });
        }
        for (i, &d) in diag.iter().enumerate() {
            if !(d.is_finite() && d > 0.0) {
                return Err(LinSolveError::NonPositiveDiagonal { index: i, value: d });
            }
            let off = if i > 0 { sub[i - 1].abs() } else { 0.0 }
                + if i < n - 1 { sup[i].abs() } else { 0.0 };
            if d + 1e-12 * d.abs() < off {
                return Err(LinSolveError::NotDiagonallyDominant { index: i });
            }
        }
        Ok(LocalOperator { sub, diag, sup })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn sub(&self) -> &[f64] {
        &self.sub
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn sup(&self) -> &[f64] {
        &self.sup
    }

    /// Matrix-vector product, used for residual checks.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, LinSolveError> {
        let n = self.dim();
        if x.len() != n {
            return Err(LinSolveError::VectorLength {
                got: x.len(),
                expected: n,
            });
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.sub[i - 1] * x[i - 1];
            }
            if i < n - 1 {
                v += self.sup[i] * x[i + 1];
            }
            out[i] = v;
        }
        Ok(out)
    }

    /// Smallest dominance margin `diag_i - |sub_i| - |sup_i|` over all rows.
    pub fn dominance_margin(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                self.diag[i]
                    - if i > 0 { self.sub[i - 1].abs() } else { 0.0 }
                    - if i < n - 1 { self.sup[i].abs() } else { 0.0 }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Rank-one coupling `col ⊗ (row ·)`: the operator `x -> (row · x) col`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneCoupling {
    pub col: Vec<f64>,
    pub row: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve the tridiagonal system `op x = rhs` by the Thomas algorithm.
pub fn solve_local(op: &LocalOperator, rhs: &[f64]) -> Result<Vec<f64>, LinSolveError> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(LinSolveError::VectorLength {
            got: rhs.len(),
            expected: n,
        });
    }
    let pivot_floor = 1e-14 * op.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));

    // Forward elimination into scratch copies, then back substitution.
    let mut c = vec![0.0; n.saturating_sub(1)];
    let mut d = vec![0.0; n];
    let mut pivot = op.diag[0];
    if pivot.abs() <= pivot_floor {
        return Err(LinSolveError::ZeroPivot { index: 0 });
    }
    if n > 1 {
        c[0] = op.sup[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = op.diag[i] - op.sub[i - 1] * c[i - 1];
        if pivot.abs() <= pivot_floor {
            return Err(LinSolveError::ZeroPivot { index: i });
        }
        if i < n - 1 {
            c[i] = op.sup[i] / pivot;
        }
        d[i] = (rhs[i] - op.sub[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Solve `(op + col ⊗ row) x = rhs` by Sherman-Morrison.
pub fn solve_rank_one(
    op: &LocalOperator,
    coupling: &RankOneCoupling,
    rhs: &[f64],
) -> Result<Vec<f64>, LinSolveError> {
    let n = op.dim();
    if coupling.col.len() != n || coupling.row.len() != n {
        return Err(LinSolveError::VectorLength {
            got: coupling.col.len().max(coupling.row.len()),
            expected: n,
        });
    }
    let x1 = solve_local(op, rhs)?;
    let x2 = solve_local(op, &coupling.col)?;
    let denominator = 1.0 + dot(&coupling.row, &x2);
    if denominator.abs() < 1e-12 {
        return Err(LinSolveError::SingularUpdate { denominator });
    }
    let factor = dot(&coupling.row, &x1) / denominator;
    Ok(x1.iter().zip(&x2).map(|(a, b)| a - factor * b).collect())
}
