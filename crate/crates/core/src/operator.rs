//! The operator family `F_τ` acting on Hessian eigenvalues.
//!
//! `τ` selects one of five branches. With `a = cot τ` and
//! `b = √|cot²τ − 1|`:
//!
//! | branch        | `τ`          | `F_τ(λ)`                                          | cone          |
//! |---------------|--------------|---------------------------------------------------|---------------|
//! | `LogDet`      | `0`          | `½ Σ ln λᵢ`                                        | `λ > 0`       |
//! | `LogRatio`    | `(0, π/4)`   | `√(a²+1)/(2b) Σ ln((λᵢ+a−b)/(λᵢ+a+b))`            | `λ > b − a`   |
//! | `InverseSum`  | `π/4`        | `−√2 Σ 1/(1+λᵢ)`                                   | `λ > −1`      |
//! | `ArctanRatio` | `(π/4, π/2)` | `√(a²+1)/b Σ [arctan((λᵢ+a)/b) − π/4]`            | all `λ`       |
//! | `ArctanSum`   | `π/2`        | `Σ arctan λᵢ`                                      | all `λ`       |
//!
//! The arctan-ratio branch is evaluated through the tangent difference
//! formula, which has no pole; the literal ratio form is kept in
//! [`TauRegime::eval_ratio_form`] for cross-checking.

use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

#[allow(unused_imports)] // unused when std float methods are in scope
use num_traits::Float;

use crate::error::{invalid, Error, Result};

/// Absolute tolerance used to snap `τ` onto `0`, `π/4` and `π/2`.
pub const TAU_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    LogDet,
    LogRatio,
    InverseSum,
    ArctanRatio,
    ArctanSum,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::LogDet => "log-det",
            Branch::LogRatio => "log-ratio",
            Branch::InverseSum => "inverse-sum",
            Branch::ArctanRatio => "arctan-ratio",
            Branch::ArctanSum => "arctan-sum",
        }
    }
}

/// Hessian eigenvalues at a point, sorted nondecreasingly, `1 ≤ n ≤ 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenTuple {
    len: usize,
    values: [f64; 3],
}

impl EigenTuple {
    /// Sorts `values`; rejects NaN and lengths outside `1..=3`.
    pub fn new(values: &[f64]) -> Result<Self> {
        let len = values.len();
        if !(1..=3).contains(&len) {
            return Err(Error::UnsupportedDimension { dim: len });
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("eigenvalues must not be NaN"));
        }
        let mut buf = [0.0; 3];
        buf[..len].copy_from_slice(values);
        buf[..len].sort_by(f64::total_cmp);
        Ok(Self { len, values: buf })
    }

    /// `n` copies of `value`.
    pub fn splat(n: usize, value: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::UnsupportedDimension { dim: n });
        }
        let mut values = [0.0; 3];
        values[..n].fill(value);
        Ok(Self { len: n, values })
    }

    pub(crate) fn from_sorted(len: usize, values: [f64; 3]) -> Self {
        debug_assert!(values[..len].windows(2).all(|w| w[0] <= w[1]));
        Self { len, values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.len - 1]
    }

    pub fn sum(&self) -> f64 {
        self.as_slice().iter().sum()
    }
}

/// The branch of `F_τ` selected by `τ`, with its constants `a = cot τ` and
/// `b = √|cot²τ − 1|`.
///
/// For `LogDet` both constants are `+∞` and unused; for `InverseSum`,
/// `a = 1` and `b = 0`; for `ArctanSum`, `a = 0` and `b = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauRegime {
    tau: f64,
    branch: Branch,
    a: f64,
    b: f64,
    // √(a²+1)/(2b) for LogRatio, √(a²+1)/b for ArctanRatio
    scale: f64,
}

/// Same as [`TauRegime::new`].
pub fn regime_of(tau: f64) -> Result<TauRegime> {
    TauRegime::new(tau)
}

impl TauRegime {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || !(-TAU_TOLERANCE..=FRAC_PI_2 + TAU_TOLERANCE).contains(&tau) {
            return Err(Error::TauOutOfRange { tau });
        }
        let branch = if tau.abs() <= TAU_TOLERANCE {
            Branch::LogDet
        } else if (tau - FRAC_PI_4).abs() <= TAU_TOLERANCE {
            Branch::InverseSum
        } else if (tau - FRAC_PI_2).abs() <= TAU_TOLERANCE {
            Branch::ArctanSum
        } else if tau < FRAC_PI_4 {
            Branch::LogRatio
        } else {
            Branch::ArctanRatio
        };
        Ok(Self::build(branch, tau))
    }

    pub fn log_det() -> Self {
        Self::build(Branch::LogDet, 0.0)
    }

    pub fn inverse_sum() -> Self {
        Self::build(Branch::InverseSum, FRAC_PI_4)
    }

    pub fn arctan_sum() -> Self {
        Self::build(Branch::ArctanSum, FRAC_PI_2)
    }

    fn build(branch: Branch, tau: f64) -> Self {
        let (tau, a, b) = match branch {
            Branch::LogDet => (0.0, f64::INFINITY, f64::INFINITY),
            Branch::InverseSum => (FRAC_PI_4, 1.0, 0.0),
            Branch::ArctanSum => (FRAC_PI_2, 0.0, 1.0),
            Branch::LogRatio | Branch::ArctanRatio => {
                let a = 1.0 / tau.tan();
                (tau, a, (a * a - 1.0).abs().sqrt())
            }
        };
        let scale = match branch {
            Branch::LogRatio => (a * a + 1.0).sqrt() / (2.0 * b),
            Branch::ArctanRatio => (a * a + 1.0).sqrt() / b,
            _ => 1.0,
        };
        Self {
            tau,
            branch,
            a,
            b,
            scale,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Exclusive lower end of the admissible interval, `None` when every
    /// real eigenvalue is admissible.
    pub fn cone_lower(&self) -> Option<f64> {
        match self.branch {
            Branch::LogDet => Some(0.0),
            Branch::LogRatio => Some(self.b - self.a),
            Branch::InverseSum => Some(-1.0),
            Branch::ArctanRatio | Branch::ArctanSum => None,
        }
    }

    pub fn admits(&self, lambda: f64) -> bool {
        self.admits_with_margin(lambda, 0.0)
    }

    /// `λ` is admissible and at least `margin` away from the cone edge.
    pub fn admits_with_margin(&self, lambda: f64, margin: f64) -> bool {
        if !lambda.is_finite() {
            return false;
        }
        match self.cone_lower() {
            Some(lower) => lambda > lower + margin,
            None => true,
        }
    }

    /// Every eigenvalue lies in the branch cone.
    pub fn admissible(&self, eigs: &EigenTuple) -> bool {
        eigs.as_slice().iter().all(|&l| self.admits(l))
    }

    fn check(&self, eigs: &[f64]) -> Result<()> {
        match eigs.iter().position(|&l| !self.admits(l)) {
            Some(index) => Err(Error::Inadmissible {
                index,
                lambda: eigs[index],
            }),
            None => Ok(()),
        }
    }

    /// One summand of `F_τ`, without the admissibility check.
    #[inline]
    pub fn term(&self, lambda: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        match self.branch {
            Branch::LogDet => 0.5 * lambda.ln(),
            Branch::LogRatio => self.scale * ((lambda + a - b) / (lambda + a + b)).ln(),
            Branch::InverseSum => -SQRT_2 / (1.0 + lambda),
            Branch::ArctanRatio => self.scale * (((lambda + a) / b).atan() - FRAC_PI_4),
            Branch::ArctanSum => lambda.atan(),
        }
    }

    /// `dF_τ/dλ` for one eigenvalue, without the admissibility check.
    #[inline]
    pub fn term_derivative(&self, lambda: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        match self.branch {
            Branch::LogDet => 0.5 / lambda,
            Branch::LogRatio => {
                let s = lambda + a;
                (a * a + 1.0).sqrt() / (s * s - b * b)
            }
            Branch::InverseSum => {
                let s = 1.0 + lambda;
                SQRT_2 / (s * s)
            }
            Branch::ArctanRatio => {
                let s = lambda + a;
                (a * a + 1.0).sqrt() / (s * s + b * b)
            }
            Branch::ArctanSum => 1.0 / (1.0 + lambda * lambda),
        }
    }

    /// `F_τ(λ)`.
    pub fn eval(&self, eigs: &EigenTuple) -> Result<f64> {
        self.check(eigs.as_slice())?;
        Ok(self.eval_unchecked(eigs.as_slice()))
    }

    #[inline]
    pub fn eval_unchecked(&self, eigs: &[f64]) -> f64 {
        eigs.iter().map(|&l| self.term(l)).sum()
    }

    /// `dF_τ/dλ` at a single eigenvalue; strictly positive on the cone.
    pub fn derivative(&self, lambda: f64) -> Result<f64> {
        if !self.admits(lambda) {
            return Err(Error::Inadmissible { index: 0, lambda });
        }
        Ok(self.term_derivative(lambda))
    }

    /// `γ F_τ(λ) + (1 − γ) Σ λᵢ`. At `γ = 0` no admissibility is required.
    pub fn blend(&self, gamma: f64, eigs: &EigenTuple) -> Result<f64> {
        check_gamma(gamma)?;
        let trace = eigs.sum();
        if gamma == 0.0 {
            return Ok(trace);
        }
        Ok(gamma * self.eval(eigs)? + (1.0 - gamma) * trace)
    }

    /// Arctan branch in the literal ratio form
    /// `√(a²+1)/b Σ arctan((λᵢ+a−b)/(λᵢ+a+b))`.
    pub fn eval_ratio_form(&self, eigs: &EigenTuple) -> Result<f64> {
        if self.branch != Branch::ArctanRatio {
            return Err(invalid(
                "the ratio form exists only for the arctan-ratio branch",
            ));
        }
        let (a, b) = (self.a, self.b);
        let mut sum = 0.0;
        for &l in eigs.as_slice() {
            let den = l + a + b;
            if den.abs() <= 4.0 * f64::EPSILON * (l.abs() + a + b) {
                return Err(Error::Pole { lambda: l });
            }
            sum += ((l + a - b) / den).atan();
        }
        Ok(self.scale * sum)
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(invalid("gamma must lie in [0, 1]"))
    }
}

/// `F̄(λ̄) = −√2 Σ 1/λ̄ᵢ` on the positive cone.
///
/// `F_{π/4}(λ) = F̄(λ + 1)`: the inverse-sum branch seen through the shift
/// `ū = u + |x|²/2`. `F̄` is concave.
pub fn fbar_eval(shifted: &EigenTuple) -> Result<f64> {
    let mut sum = 0.0;
    for (index, &l) in shifted.as_slice().iter().enumerate() {
        if !(l > 0.0) {
            return Err(Error::Inadmissible { index, lambda: l });
        }
        sum += 1.0 / l;
    }
    Ok(-SQRT_2 * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn eig(v: &[f64]) -> EigenTuple {
        EigenTuple::new(v).unwrap()
    }

    #[test]
    fn branch_selection_at_special_angles() {
        let r = regime_of(FRAC_PI_2).unwrap();
        assert_eq!(r.branch(), Branch::ArctanSum);
        assert_eq!(r.a(), 0.0);
        let r = regime_of(FRAC_PI_4).unwrap();
        assert_eq!(r.branch(), Branch::InverseSum);
        assert_eq!((r.a(), r.b()), (1.0, 0.0));
        assert_eq!(regime_of(0.0).unwrap().branch(), Branch::LogDet);
        // within the snapping tolerance
        assert_eq!(
            regime_of(FRAC_PI_4 + 5e-13).unwrap().branch(),
            Branch::InverseSum
        );
        assert_eq!(
            regime_of(FRAC_PI_4 + 1e-9).unwrap().branch(),
            Branch::ArctanRatio
        );
    }

    #[test]
    fn log_ratio_constants_at_pi_over_6() {
        // mpmath, 40 digits: a = √3, b = √2
        let r = regime_of(PI / 6.0).unwrap();
        assert_eq!(r.branch(), Branch::LogRatio);
        assert_abs_diff_eq!(r.a(), 1.732_050_807_568_877_2, epsilon = 1e-15);
        assert_abs_diff_eq!(r.b(), core::f64::consts::SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn tau_out_of_range() {
        assert!(matches!(regime_of(-0.1), Err(Error::TauOutOfRange { .. })));
        assert!(matches!(regime_of(2.0), Err(Error::TauOutOfRange { .. })));
        assert!(regime_of(f64::NAN).is_err());
    }

    #[test]
    fn a_squared_plus_one_is_inverse_sin_squared() {
        for k in 1..=200 {
            let tau = FRAC_PI_2 * k as f64 / 200.0;
            let r = regime_of(tau).unwrap();
            let s = r.tau().sin();
            assert_abs_diff_eq!(r.a() * r.a() + 1.0, 1.0 / (s * s), epsilon = 1e-12);
        }
    }

    #[test]
    fn eval_examples() {
        assert_eq!(TauRegime::log_det().eval(&eig(&[1.0, 1.0])).unwrap(), 0.0);
        assert_abs_diff_eq!(
            TauRegime::inverse_sum().eval(&eig(&[0.0, 0.0])).unwrap(),
            -2.0 * SQRT_2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            TauRegime::arctan_sum().eval(&eig(&[1.0, 1.0])).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        // mpmath: (√(a²+1)/2b)·ln((1+a−b)/(1+a+b)) at τ = π/6
        let r = regime_of(PI / 6.0).unwrap();
        assert_abs_diff_eq!(
            r.eval(&eig(&[1.0])).unwrap(),
            -0.810_496_989_476_753_7,
            epsilon = 1e-14
        );
    }

    #[test]
    fn eval_rejects_inadmissible() {
        let err = TauRegime::log_det().eval(&eig(&[2.0, -0.5])).unwrap_err();
        assert_eq!(
            err,
            Error::Inadmissible {
                index: 0,
                lambda: -0.5
            }
        );
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(TauRegime::arctan_sum().derivative(1.0).unwrap(), 0.5);
        assert_eq!(TauRegime::inverse_sum().derivative(0.0).unwrap(), SQRT_2);
        assert_eq!(TauRegime::log_det().derivative(0.5).unwrap(), 1.0);
        assert!(TauRegime::log_det().derivative(-1.0).is_err());
    }

    #[test]
    fn admissibility_examples() {
        assert!(!TauRegime::log_det().admissible(&eig(&[-0.1])));
        assert!(TauRegime::inverse_sum().admissible(&eig(&[-0.5, 2.0])));
        // b − a = √2 − √3 ≈ −0.31784, so −0.2 is inside the cone.
        let r = regime_of(PI / 6.0).unwrap();
        assert_abs_diff_eq!(
            r.cone_lower().unwrap(),
            -0.317_837_245_195_782_27,
            epsilon = 1e-15
        );
        assert!(r.admissible(&eig(&[-0.2])));
        assert!(!r.admissible(&eig(&[-0.4])));
        // the second component λ < −a−b is rejected
        assert!(!r.admissible(&eig(&[-5.0])));
        assert!(regime_of(1.2)
            .unwrap()
            .admissible(&eig(&[-100.0, 0.0, 100.0])));
    }

    #[test]
    fn blend_examples() {
        let r = TauRegime::log_det();
        assert_eq!(r.blend(0.0, &eig(&[2.0, 3.0])).unwrap(), 5.0);
        assert_eq!(
            TauRegime::arctan_sum().blend(1.0, &eig(&[0.0])).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            TauRegime::inverse_sum()
                .blend(0.5, &eig(&[0.0, 0.0]))
                .unwrap(),
            -SQRT_2,
            epsilon = 1e-15
        );
        // γ = 0 is the heat equation: no cone
        assert_eq!(r.blend(0.0, &eig(&[-1.0])).unwrap(), -1.0);
        assert!(r.blend(1.5, &eig(&[1.0])).is_err());
    }

    #[test]
    fn fbar_examples() {
        assert_abs_diff_eq!(
            fbar_eval(&eig(&[1.0, 1.0])).unwrap(),
            -2.0 * SQRT_2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            fbar_eval(&eig(&[2.0])).unwrap(),
            -SQRT_2 / 2.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            TauRegime::inverse_sum().eval(&eig(&[0.5])).unwrap(),
            fbar_eval(&eig(&[1.5])).unwrap(),
            epsilon = 1e-15
        );
        assert!(fbar_eval(&eig(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn ratio_form_pole() {
        let r = regime_of(PI / 3.0).unwrap();
        let pole = -r.a() - r.b();
        let e = EigenTuple::from_sorted(1, [pole, 0.0, 0.0]);
        assert!(matches!(r.eval_ratio_form(&e), Err(Error::Pole { .. })));
        assert!(TauRegime::arctan_sum()
            .eval_ratio_form(&eig(&[0.0]))
            .is_err());
    }

    fn regime_strategy() -> impl Strategy<Value = TauRegime> {
        prop_oneof![
            Just(TauRegime::log_det()),
            (0.01f64..0.78).prop_map(|t| regime_of(t).unwrap()),
            Just(TauRegime::inverse_sum()),
            (0.79f64..1.56).prop_map(|t| regime_of(t).unwrap()),
            Just(TauRegime::arctan_sum()),
        ]
    }

    fn admissible_lambda(r: &TauRegime, s: f64) -> f64 {
        // s in (0, 1): map into the cone, away from its edge
        match r.cone_lower() {
            Some(lo) => lo + 0.05 + 8.0 * s,
            None => -8.0 + 16.0 * s,
        }
    }

    proptest! {
        #[test]
        fn derivative_is_positive_and_matches_metric_inverse(r in regime_strategy(), s in 0.0f64..1.0) {
            let l = admissible_lambda(&r, s);
            let d = r.derivative(l).unwrap();
            prop_assert!(d > 0.0);
            let metric = if r.branch() == Branch::LogDet {
                2.0 * l
            } else {
                r.tau().sin() * (1.0 + l * l) + 2.0 * r.tau().cos() * l
            };
            prop_assert!((d * metric - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn eval_increases_in_each_eigenvalue(r in regime_strategy(), s in 0.0f64..0.9, t in 0.0f64..1.0) {
            let l1 = admissible_lambda(&r, s);
            let l2 = admissible_lambda(&r, t);
            let lo = r.eval(&eig(&[l1, l2])).unwrap();
            let hi = r.eval(&eig(&[l1 + 1e-3, l2])).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn arctan_ratio_forms_agree(tau in 0.79f64..1.56, s in 0.0f64..1.0) {
            let r = regime_of(tau).unwrap();
            let l = -r.a() - r.b() + 1e-3 + 20.0 * s;
            let e = eig(&[l]);
            prop_assert!((r.eval(&e).unwrap() - r.eval_ratio_form(&e).unwrap()).abs() <= 1e-12);
        }
    }
}
