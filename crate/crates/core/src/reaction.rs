//! Reaction coefficients `a(r)` evaluated at the total mass `r = ∫ y dx`.
//!
//! Every family satisfies the standing assumptions of the model: twice
//! continuously differentiable, non-decreasing, pinched between positive
//! bounds `0 < a0 <= a(r) <= a1`, with `|a'| + |a''|` below a declared
//! constant `M`. The solver and the analysis-facing checks rely on all four
//! properties, so [`ReactionFunction::validate`] can audit them by sampling.

use thiserror::Error;

/// Largest value of `|s'|` for the standard sigmoid `s(x) = 1/(1+e^-x)`.
const SIGMOID_D1_SUP: f64 = 0.25;
/// Largest value of `|s''|` for the standard sigmoid, attained at
/// `s = (3 ± sqrt(3))/6`; equals `1/(6 sqrt(3))`.
const SIGMOID_D2_SUP: f64 = 0.09622504486493764;
/// Largest slope of the quintic ramp `6t^5 - 15t^4 + 10t^3` on [0, 1].
const RAMP_D1_SUP: f64 = 1.875;
/// Largest curvature of the quintic ramp on [0, 1]; equals `10/sqrt(3)`.
const RAMP_D2_SUP: f64 = 5.773502691896258;

#[derive(Debug, Error, PartialEq)]
pub enum ReactionError {
    #[error("lower bound a0 must be positive, got {0}")]
    NonPositiveLowerBound(f64),
    #[error("upper bound a1 = {a1} must be at least a0 = {a0}")]
    UpperBelowLower { a0: f64, a1: f64 },
    #[error("steepness k must be positive, got {0}")]
    NonPositiveSteepness(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Family {
    Constant,
    /// `a0 + (a1-a0) * sigmoid(k r)`.
    Logistic,
    /// `a0 + (a1-a0) * ramp(k r)` where `ramp` is the C^2 quintic smoothstep
    /// of the argument clamped to [0, 1]: a flat-then-rise-then-flat profile.
    SmoothClamp,
}

/// A reaction coefficient `a(r)` together with its declared derivative bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionFunction {
    family: Family,
    a0: f64,
    a1: f64,
    k: f64,
    bound: f64,
}

/// Result of sampling a [`ReactionFunction`] against its stated properties.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// All individual checks passed.
    pub passed: bool,
    /// `d1(r) >= 0` at every sample.
    pub monotone: bool,
    /// `0 < a0 <= eval(r) <= a1` at every sample.
    pub bounds_hold: bool,
    /// `|d1(r)| + |d2(r)| <= M` at every sample.
    pub derivative_bound_holds: bool,
    /// Largest sampled value of `|d1| + |d2|`.
    pub observed_derivative_sup: f64,
    /// The declared constant `M`.
    pub declared_bound: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ReactionFunction {
    /// Constant coefficient `a(r) = a0`.
    pub fn constant(a0: f64) -> Result<Self, ReactionError> {
        if !(a0.is_finite() && a0 > 0.0) {
            return Err(ReactionError::NonPositiveLowerBound(a0));
        }
        Ok(ReactionFunction {
            family: Family::Constant,
            a0,
            a1: a0,
            k: 0.0,
            bound: 0.0,
        })
    }

    /// Sigmoidal transition from `a0` (crowding small or negative) to `a1`.
    pub fn logistic(a0: f64, a1: f64, k: f64) -> Result<Self, ReactionError> {
        Self::check_params(a0, a1, k)?;
        let bound = (a1 - a0) * (k * SIGMOID_D1_SUP + k * k * SIGMOID_D2_SUP);
        Ok(ReactionFunction {
            family: Family::Logistic,
            a0,
            a1,
            k,
            bound,
        })
    }

    /// Piecewise-flat transition: exactly `a0` for `r <= 0`, exactly `a1` for
    /// `r >= 1/k`, C^2 quintic ramp in between.
    pub fn smooth_clamp(a0: f64, a1: f64, k: f64) -> Result<Self, ReactionError> {
        Self::check_params(a0, a1, k)?;
        let bound = (a1 - a0) * (k * RAMP_D1_SUP + k * k * RAMP_D2_SUP);
        Ok(ReactionFunction {
            family: Family::SmoothClamp,
            a0,
            a1,
            k,
            bound,
        })
    }

    /// Replace the automatic derivative bound with a declared one.
    pub fn with_declared_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    fn check_params(a0: f64, a1: f64, k: f64) -> Result<(), ReactionError> {
        if !(a0.is_finite() && a0 > 0.0) {
            return Err(ReactionError::NonPositiveLowerBound(a0));
        }
        if !(a1.is_finite() && a1 >= a0) {
            return Err(ReactionError::UpperBelowLower { a0, a1 });
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(ReactionError::NonPositiveSteepness(k));
        }
        Ok(())
    }

    pub fn lower_bound(&self) -> f64 {
        self.a0
    }

    pub fn upper_bound(&self) -> f64 {
        self.a1
    }

    pub fn derivative_bound(&self) -> f64 {
        self.bound
    }

    /// `a(r)`.
    pub fn eval(&self, r: f64) -> f64 {
        match self.family {
            Family::Constant => self.a0,
            Family::Logistic => self.a0 + (self.a1 - self.a0) * sigmoid(self.k * r),
            Family::SmoothClamp => {
                let t = (self.k * r).clamp(0.0, 1.0);
                let ramp = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
                self.a0 + (self.a1 - self.a0) * ramp
            }
        }
    }

    /// `a'(r)`.
    pub fn d1(&self, r: f64) -> f64 {
        match self.family {
            Family::Constant => 0.0,
            Family::Logistic => {
                let s = sigmoid(self.k * r);
                (self.a1 - self.a0) * self.k * s * (1.0 - s)
            }
            Family::SmoothClamp => {
                let x = self.k * r;
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let u = 1.0 - x;
                (self.a1 - self.a0) * self.k * 30.0 * x * x * u * u
            }
        }
    }

    /// `a''(r)`.
    pub fn d2(&self, r: f64) -> f64 {
        match self.family {
            Family::Constant => 0.0,
            Family::Logistic => {
                let s = sigmoid(self.k * r);
                (self.a1 - self.a0) * self.k * self.k * s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Family::SmoothClamp => {
                let x = self.k * r;
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                (self.a1 - self.a0) * self.k * self.k * 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)
            }
        }
    }

    /// Sample the standing assumptions on the default window [-10, 10] with
    /// 1001 points.
    pub fn validate(&self) -> ValidationReport {
        self.validate_on(-10.0, 10.0, 1001)
    }

    /// Sample the standing assumptions on `[lo, hi]` at `samples` points.
    pub fn validate_on(&self, lo: f64, hi: f64, samples: usize) -> ValidationReport {
        let samples = samples.max(2);
        let tol = 1e-12 * (1.0 + self.a1.abs());
        let mut monotone = true;
        let mut bounds_hold = true;
        let mut sup = 0.0f64;
        for i in 0..samples {
            let r = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            let v = self.eval(r);
            if v < self.a0 - tol || v > self.a1 + tol {
                bounds_hold = false;
            }
            let d1 = self.d1(r);
            if d1 < -tol {
                monotone = false;
            }
            sup = sup.max(d1.abs() + self.d2(r).abs());
        }
        let derivative_bound_holds = sup <= self.bound + tol;
        ValidationReport {
            passed: monotone && bounds_hold && derivative_bound_holds && self.a0 > 0.0,
            monotone,
            bounds_hold,
            derivative_bound_holds,
            observed_derivative_sup: sup,
            declared_bound: self.bound,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central_d1(f: &ReactionFunction, r: f64, h: f64) -> f64 {
        (f.eval(r + h) - f.eval(r - h)) / (2.0 * h)
    }

    fn central_d2(f: &ReactionFunction, r: f64, h: f64) -> f64 {
        (f.d1(r + h) - f.d1(r - h)) / (2.0 * h)
    }

    #[test]
    fn constant_family_is_flat() {
        let a = ReactionFunction::constant(1.0).unwrap();
        assert_eq!(a.eval(5.0), 1.0);
        assert_eq!(a.eval(-17.0), 1.0);
        assert_eq!(a.d1(3.0), 0.0);
        assert_eq!(a.d2(3.0), 0.0);
        assert_eq!(a.derivative_bound(), 0.0);
    }

    #[test]
    fn logistic_midpoint_values() {
        let a = ReactionFunction::logistic(1.0, 3.0, 1.0).unwrap();
        assert_eq!(a.eval(0.0), 2.0);
        assert_eq!(a.d1(0.0), 0.5);
    }

    #[test]
    fn logistic_derivatives_match_finite_differences() {
        let a = ReactionFunction::logistic(1.0, 3.0, 1.0).unwrap();
        for r in [-2.0, 0.0, 2.0] {
            let fd1 = central_d1(&a, r, 1e-5);
            assert!(
                (fd1 - a.d1(r)).abs() <= 1e-8 * a.d1(r).abs().max(1.0),
                "d1 mismatch at r = {r}"
            );
            let fd2 = central_d2(&a, r, 1e-5);
            assert!(
                (fd2 - a.d2(r)).abs() <= 1e-8 * a.d2(r).abs().max(1.0),
                "d2 mismatch at r = {r}"
            );
        }
    }

    #[test]
    fn smooth_clamp_is_flat_outside_the_ramp() {
        let a = ReactionFunction::smooth_clamp(0.5, 2.0, 2.0).unwrap();
        assert_eq!(a.eval(-1.0), 0.5);
        assert_eq!(a.eval(0.0), 0.5);
        assert_eq!(a.eval(0.5), 2.0);
        assert_eq!(a.eval(10.0), 2.0);
        assert_eq!(a.d1(-0.1), 0.0);
        assert_eq!(a.d1(0.6), 0.0);
        // C^2 at the junctions: curvature fades out instead of jumping.
        assert!(a.d2(1e-9).abs() < 1e-6);
        assert!(a.d2(0.5 - 1e-9).abs() < 1e-6);
    }

    #[test]
    fn smooth_clamp_derivatives_match_finite_differences() {
        let a = ReactionFunction::smooth_clamp(0.5, 2.0, 2.0).unwrap();
        for r in [0.1, 0.25, 0.4] {
            let fd1 = central_d1(&a, r, 1e-6);
            assert!((fd1 - a.d1(r)).abs() <= 1e-6 * a.d1(r).abs().max(1.0));
            let fd2 = central_d2(&a, r, 1e-6);
            assert!((fd2 - a.d2(r)).abs() <= 1e-6 * a.d2(r).abs().max(1.0));
        }
    }

    #[test]
    fn validate_accepts_a_conservative_declared_bound() {
        // Analytic bound for a0 = 1, a1 = 3, k = 1: slope sup 0.5 plus
        // curvature sup just under 0.2, padded to 0.7.
        let a = ReactionFunction::logistic(1.0, 3.0, 1.0)
            .unwrap()
            .with_declared_bound(0.7);
        let report = a.validate();
        assert!(report.passed, "{report:?}");
        assert!(report.observed_derivative_sup > 0.5);
        assert!(report.observed_derivative_sup < 0.7);
    }

    #[test]
    fn validate_rejects_an_optimistic_declared_bound() {
        let a = ReactionFunction::logistic(1.0, 3.0, 1.0)
            .unwrap()
            .with_declared_bound(0.1);
        let report = a.validate();
        assert!(!report.passed);
        assert!(!report.derivative_bound_holds);
        assert!(report.monotone && report.bounds_hold);
    }

    #[test]
    fn validate_constant_family() {
        let report = ReactionFunction::constant(2.5).unwrap().validate();
        assert!(report.passed);
        assert_eq!(report.observed_derivative_sup, 0.0);
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(ReactionFunction::constant(0.0).is_err());
        assert!(ReactionFunction::logistic(-1.0, 3.0, 1.0).is_err());
        assert!(ReactionFunction::logistic(2.0, 1.0, 1.0).is_err());
        assert!(ReactionFunction::smooth_clamp(1.0, 2.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn every_family_validates_with_its_automatic_bound(
            a0 in 0.1f64..5.0,
            gap in 0.0f64..5.0,
            k in 0.1f64..4.0,
            which in 0usize..3,
        ) {
            let f = match which {
                0 => ReactionFunction::constant(a0).unwrap(),
                1 => ReactionFunction::logistic(a0, a0 + gap, k).unwrap(),
                _ => ReactionFunction::smooth_clamp(a0, a0 + gap, k).unwrap(),
            };
            let report = f.validate_on(-100.0, 100.0, 10_000);
            prop_assert!(report.passed, "{:?}", report);
        }

        #[test]
        fn evaluations_stay_monotone_and_bounded(
            a0 in 0.1f64..5.0,
            gap in 0.0f64..5.0,
            k in 0.1f64..4.0,
            r in -100.0f64..100.0,
            which in 0usize..3,
        ) {
            let f = match which {
                0 => ReactionFunction::constant(a0).unwrap(),
                1 => ReactionFunction::logistic(a0, a0 + gap, k).unwrap(),
                _ => ReactionFunction::smooth_clamp(a0, a0 + gap, k).unwrap(),
            };
            let tol = 1e-12 * (1.0 + f.upper_bound());
            prop_assert!(f.d1(r) >= 0.0);
            prop_assert!(f.eval(r) >= f.lower_bound() - tol);
            prop_assert!(f.eval(r) <= f.upper_bound() + tol);
            prop_assert!(f.d1(r).abs() + f.d2(r).abs() <= f.derivative_bound() + tol);
        }
    }
}
