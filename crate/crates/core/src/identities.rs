//! Pointwise checks of the operator identities: derivative accuracy, the
//! metric-inverse relation, the arctan shift and concavity of `F̄`.
//!
//! Every function takes explicit sample points so callers choose the
//! sampling scheme.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std float methods are in scope
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::operator::{fbar_eval, Branch, EigenTuple, TauRegime};

/// Step sizes used for the observed derivative order.
pub const ORDER_STEPS: (f64, f64) = (1e-4, 1e-5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    pub lambda: f64,
    pub error_coarse: f64,
    pub error_fine: f64,
    /// `log10(error_coarse / error_fine)`.
    pub order: f64,
    /// `ε·max|F(λ ± h)|/(2h)` at the fine step: the error rounding alone causes.
    pub rounding_floor: f64,
}

impl DerivativeCheck {
    /// Whether the fine-step truncation error, extrapolated from the coarse
    /// step, stands at least [`RESOLVABLE_RATIO`] above the rounding floor.
    /// Elsewhere the observed order says nothing about the formula.
    pub fn resolvable(&self) -> bool {
        let (h1, h2) = ORDER_STEPS;
        self.error_coarse * (h2 / h1).powi(2) >= RESOLVABLE_RATIO * self.rounding_floor
    }
}

/// Margin of truncation over rounding error required by
/// [`DerivativeCheck::resolvable`].
pub const RESOLVABLE_RATIO: f64 = 3.0;

/// Centered differences of the single-eigenvalue term against `f'`.
pub fn derivative_check(regime: &TauRegime, lambda: f64) -> Result<DerivativeCheck> {
    let (h1, h2) = ORDER_STEPS;
    let exact = regime.derivative(lambda)?;
    for h in [h1, h2] {
        if !regime.admits(lambda - h) {
            return Err(invalid("derivative stencil leaves the admissible cone"));
        }
    }
    let fd = |h: f64| (regime.term(lambda + h) - regime.term(lambda - h)) / (2.0 * h);
    let error_coarse = (fd(h1) - exact).abs();
    let error_fine = (fd(h2) - exact).abs();
    let rounding_floor = f64::EPSILON
        * regime
            .term(lambda + h2)
            .abs()
            .max(regime.term(lambda - h2).abs())
        / (2.0 * h2);
    Ok(DerivativeCheck {
        lambda,
        error_coarse,
        error_fine,
        order: (error_coarse / error_fine).log10() / (h1 / h2).log10(),
        rounding_floor,
    })
}

/// Eigenvalues where the fine-step truncation error of each branch clears
/// the rounding floor: just inside the cone edge, or around the inflection
/// `λ = −a` of the arctan branches, where `|f'''|` peaks.
pub fn order_probe_points(regime: &TauRegime) -> [f64; 3] {
    match regime.cone_lower() {
        Some(lo) => [lo + 0.05, lo + 0.1, lo + 0.2],
        None => {
            let (a, b) = (regime.a(), regime.b());
            [-a - 0.05 * b, -a, -a + 0.05 * b]
        }
    }
}

/// Diagonal eigenvalue of the induced metric, `sin τ(1+λ²) + 2cos τ·λ`,
/// or `2λ` at `τ = 0`.
pub fn metric_eigenvalue(regime: &TauRegime, lambda: f64) -> f64 {
    // sin τ (1 + λ²) + 2 cos τ λ = sin τ ((λ + a)² + 1 − a²), factored so
    // that it stays accurate near the cone edge
    let (a, b) = (regime.a(), regime.b());
    let s = regime.tau().sin();
    match regime.branch() {
        Branch::LogDet => 2.0 * lambda,
        Branch::LogRatio => s * (lambda + a - b) * (lambda + a + b),
        Branch::InverseSum => s * (lambda + 1.0) * (lambda + 1.0),
        Branch::ArctanRatio => s * ((lambda + a) * (lambda + a) + b * b),
        Branch::ArctanSum => 1.0 + lambda * lambda,
    }
}

/// `|f'(λ)·g(λ) − 1|`.
pub fn metric_inverse_defect(regime: &TauRegime, lambda: f64) -> Result<f64> {
    Ok((regime.derivative(lambda)? * metric_eigenvalue(regime, lambda) - 1.0).abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityCheck {
    /// Finite-difference Hessian diagonal.
    pub diagonal: Vec<f64>,
    /// Closed form `−2√2/λ̄ᵢ³`.
    pub expected: Vec<f64>,
    pub max_relative_error: f64,
    /// Largest `|Hᵢⱼ| / √(|Hᵢᵢ Hⱼⱼ|)` over `i ≠ j`, using the closed-form diagonal.
    pub max_off_diagonal: f64,
    pub all_negative: bool,
}

/// Finite-difference Hessian of `F̄` at a point of the positive cone, with
/// per-axis steps `10⁻³·λ̄ᵢ`. The diagonal is Richardson-extrapolated from
/// steps `h` and `h/2`.
pub fn fbar_concavity(shifted: &[f64]) -> Result<ConcavityCheck> {
    let n = shifted.len();
    let f = |p: &[f64]| -> Result<f64> { fbar_eval(&EigenTuple::new(p)?) };
    let f0 = f(shifted)?;
    let steps: Vec<f64> = shifted.iter().map(|l| 1e-3 * l).collect();
    let mut diagonal = Vec::with_capacity(n);
    let mut off: f64 = 0.0;
    let mut p: Vec<f64> = shifted.to_vec();
    for i in 0..n {
        let mut second = |h: f64| -> Result<f64> {
            p[i] = shifted[i] + h;
            let fp = f(&p)?;
            p[i] = shifted[i] - h;
            let fm = f(&p)?;
            p[i] = shifted[i];
            Ok((fp - 2.0 * f0 + fm) / (h * h))
        };
        let coarse = second(steps[i])?;
        let fine = second(0.5 * steps[i])?;
        diagonal.push((4.0 * fine - coarse) / 3.0);
        let hi = steps[i];
        for j in i + 1..n {
            let hj = steps[j];
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                p[i] = shifted[i] + si * hi;
                p[j] = shifted[j] + sj * hj;
                let v = f(&p);
                p[i] = shifted[i];
                p[j] = shifted[j];
                v
            };
            let mixed = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                + corner(-1.0, -1.0)?)
                / (4.0 * hi * hj);
            let scale = 2.0 * core::f64::consts::SQRT_2 / (shifted[i] * shifted[j]).powf(1.5);
            off = off.max(mixed.abs() / scale);
        }
    }
    let expected: Vec<f64> = shifted
        .iter()
        .map(|l| -2.0 * core::f64::consts::SQRT_2 / (l * l * l))
        .collect();
    let max_relative_error = diagonal
        .iter()
        .zip(&expected)
        .map(|(d, e)| ((d - e) / e).abs())
        .fold(0.0, f64::max);
    Ok(ConcavityCheck {
        all_negative: diagonal.iter().all(|&d| d < 0.0),
        diagonal,
        expected,
        max_relative_error,
        max_off_diagonal: off,
    })
}
