//! Hessian cone conditions, decay-rate fits and the graph geometry.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_4;

#[allow(unused_imports)] // unused when std float methods are in scope
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::field::{hessian, hessian_at, third_from_hessian, PointField, ScalarField};
use crate::flow::FlowState;
use crate::linalg::SymMatrix;
use crate::operator::{regime_of, EigenTuple, TauRegime, TAU_TOLERANCE};

/// Margins this close to zero are reported as exactly zero, so data sitting
/// on a cone face (up to finite-difference rounding) counts as inside.
pub const MARGIN_SNAP: f64 = 1e-9;
/// Fraction of the time span treated as transient by [`decay_exponent`].
pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.2;

/// A two-sided Hessian eigenvalue condition, or 2-homogeneity (`A`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionSpec {
    A,
    /// `(−1 + ζ) I ≤ D²u ≤ ϱ I`, paired with `τ = π/4`.
    B {
        zeta: f64,
        rho: f64,
    },
    /// `(bμ − a) I ≤ D²u ≤ (bΛ − a) I` for `τ ∈ (0, π/4)`.
    E {
        tau: f64,
        mu: f64,
        lam: f64,
    },
    /// `−(b + bη + a) I ≤ D²u ≤ (b + bη − a) I` for `τ ∈ (π/4, π/2)`.
    L {
        tau: f64,
        eta: f64,
    },
}

impl ConditionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ConditionSpec::A => "A",
            ConditionSpec::B { .. } => "B",
            ConditionSpec::E { .. } => "E",
            ConditionSpec::L { .. } => "L",
        }
    }

    /// The regime angle the condition belongs to (`π/4` for A and B).
    pub fn tau(&self) -> f64 {
        match *self {
            ConditionSpec::A | ConditionSpec::B { .. } => FRAC_PI_4,
            ConditionSpec::E { tau, .. } | ConditionSpec::L { tau, .. } => tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_open = |t: f64, lo: f64, hi: f64| t > lo + TAU_TOLERANCE && t < hi - TAU_TOLERANCE;
        match *self {
            ConditionSpec::A => Ok(()),
            ConditionSpec::B { zeta, rho } => {
                if !(zeta > 0.0 && zeta < rho + 1.0) {
                    return Err(invalid(format!(
                        "zeta must satisfy 0 < zeta < rho + 1 (zeta = {zeta}, rho = {rho})"
                    )));
                }
                Ok(())
            }
            ConditionSpec::E { tau, mu, lam } => {
                if !in_open(tau, 0.0, FRAC_PI_4) {
                    return Err(invalid(format!(
                        "condition E needs tau in (0, pi/4), got {tau}"
                    )));
                }
                if !(mu > 1.0) {
                    return Err(invalid(format!(
                        "mu must exceed 1 for condition E (got {mu})"
                    )));
                }
                if !(lam > mu) {
                    return Err(invalid(format!(
                        "lam must exceed mu (mu = {mu}, lam = {lam})"
                    )));
                }
                Ok(())
            }
            ConditionSpec::L { tau, eta } => {
                if !in_open(tau, FRAC_PI_4, core::f64::consts::FRAC_PI_2) {
                    return Err(invalid(format!(
                        "condition L needs tau in (pi/4, pi/2), got {tau}"
                    )));
                }
                if !(eta > 0.0) {
                    return Err(invalid(format!("eta must be positive (got {eta})")));
                }
                Ok(())
            }
        }
    }

    /// Eigenvalue interval `[lower, upper]`. Parameters are not validated.
    pub fn bounds(&self) -> Result<(f64, f64)> {
        match *self {
            ConditionSpec::A => Err(Error::ConditionNotACone),
            ConditionSpec::B { zeta, rho } => Ok((zeta - 1.0, rho)),
            ConditionSpec::E { tau, mu, lam } => {
                let r = regime_of(tau)?;
                Ok((r.b() * mu - r.a(), r.b() * lam - r.a()))
            }
            ConditionSpec::L { tau, eta } => {
                let r = regime_of(tau)?;
                let w = r.b() * (1.0 + eta);
                Ok((-(w + r.a()), w - r.a()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    pub satisfied: bool,
    pub lam_min: f64,
    pub lam_max: f64,
    /// Smallest signed distance from an eigenvalue to the nearer bound.
    pub margin: f64,
    pub worst_point: usize,
}

/// Sorted eigenvalues of every interior Hessian.
pub fn eigen_field(hess: &PointField<SymMatrix>) -> PointField<EigenTuple> {
    let grid = *hess.grid();
    let n = grid.dim();
    let mut data = vec![EigenTuple::from_sorted(n, [0.0; 3]); grid.len()];
    for (p, h) in hess.interior() {
        data[p] = h.eigenvalues();
    }
    PointField::new(grid, hess.ring(), data)
}

pub fn check_condition(spec: &ConditionSpec, field: &ScalarField) -> Result<ConditionReport> {
    let (lower, upper) = spec.bounds()?;
    let eigs = eigen_field(&hessian(field)?);
    let mut report = ConditionReport {
        satisfied: true,
        lam_min: f64::INFINITY,
        lam_max: f64::NEG_INFINITY,
        margin: f64::INFINITY,
        worst_point: 0,
    };
    for (p, e) in eigs.interior() {
        report.lam_min = report.lam_min.min(e.min());
        report.lam_max = report.lam_max.max(e.max());
        let m = (e.min() - lower).min(upper - e.max());
        if m < report.margin {
            report.margin = m;
            report.worst_point = p;
        }
    }
    if report.margin.abs() <= MARGIN_SNAP {
        report.margin = 0.0;
    }
    report.satisfied = report.margin >= 0.0;
    Ok(report)
}

/// `max |u₀(R x)/R² − u₀(x)|` over the given radii and directions.
pub fn homogeneity_defect<F>(u0: F, radii: &[f64], dirs: &[&[f64]]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if let Some(&r) = radii.iter().find(|&&r| !(r > 0.0 && r.is_finite())) {
        return Err(invalid(format!("sample radii must be positive (got {r})")));
    }
    let mut worst: f64 = 0.0;
    let mut scaled = Vec::new();
    for dir in dirs {
        let base = u0(dir);
        for &r in radii {
            scaled.clear();
            scaled.extend(dir.iter().map(|x| r * x));
            worst = worst.max((u0(&scaled) / (r * r) - base).abs());
        }
    }
    Ok(worst)
}

/// Power-law fit `v ≈ c · t^{−α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub alpha: f64,
    pub c: f64,
    /// Root-mean-square residual in `ln v`.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares fit of `ln v = ln c − α ln t` over all samples.
pub fn fit_power_law(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < 5 {
        return Err(Error::InsufficientSamples {
            needed: 5,
            found: series.len(),
        });
    }
    for (index, &(t, v)) in series.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveSample { index, value: v });
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::NonPositiveSample { index, value: t });
        }
    }
    let k = series.len() as f64;
    let (sx, sy) = series
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(t, v)| (sx + t.ln(), sy + v.ln()));
    let (mx, my) = (sx / k, sy / k);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(t, v) in series {
        let dx = t.ln() - mx;
        sxx += dx * dx;
        sxy += dx * (v.ln() - my);
    }
    if sxx == 0.0 {
        return Err(invalid("decay fit needs at least two distinct times"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = series
        .iter()
        .map(|&(t, v)| {
            let r = v.ln() - (intercept + slope * t.ln());
            r * r
        })
        .sum();
    Ok(DecayFit {
        alpha: -slope,
        c: intercept.exp(),
        residual: (sse / k).sqrt(),
        samples: series.len(),
    })
}

/// [`fit_power_law`] over samples with `t_lo ≤ t ≤ t_hi`.
pub fn fit_power_law_window(series: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Result<DecayFit> {
    let kept: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_lo && t <= t_hi)
        .collect();
    fit_power_law(&kept)
}

/// Fit after discarding the first `DEFAULT_TRANSIENT_FRACTION` of the time
/// span; the bounds being fitted only hold away from `t = 0`.
pub fn decay_exponent(series: &[(f64, f64)]) -> Result<DecayFit> {
    decay_exponent_after(series, DEFAULT_TRANSIENT_FRACTION)
}

pub fn decay_exponent_after(series: &[(f64, f64)], transient_fraction: f64) -> Result<DecayFit> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(invalid("transient fraction must lie in [0, 1)"));
    }
    let (Some(first), Some(last)) = (series.first(), series.last()) else {
        return Err(Error::InsufficientSamples {
            needed: 5,
            found: 0,
        });
    };
    let t0 = first.0 + transient_fraction * (last.0 - first.0);
    fit_power_law_window(series, t0, f64::INFINITY)
}

/// `g = sin τ (I + H²) + 2 cos τ H`.
pub fn induced_metric(tau: f64, hess: &SymMatrix) -> SymMatrix {
    let (s, c) = tau.sin_cos();
    SymMatrix::identity(hess.dim())
        .add(&hess.square())
        .scale(s)
        .add(&hess.scale(2.0 * c))
}

/// `∂/∂u_ij` of `γ F_τ(D²u) + (1 − γ) Δu`: `Q diag(γ f'(λ) + 1 − γ) Qᵀ` in the
/// eigenframe of `hess`. Equals the inverse induced metric when `γ = 1`.
pub fn operator_gradient(regime: &TauRegime, gamma: f64, hess: &SymMatrix) -> Result<SymMatrix> {
    let (eigs, q) = hess.eigen();
    let mut d = [0.0; 3];
    for (i, &l) in eigs.as_slice().iter().enumerate() {
        let fp = if gamma == 0.0 {
            0.0
        } else {
            regime.derivative(l)?
        };
        d[i] = gamma * fp + (1.0 - gamma);
    }
    Ok(SymMatrix::from_eigen(&d[..eigs.len()], &q))
}

/// `max_k |∂_k F(D²u) − Σ g^{ij} ∂_k u_ij|` over the `ring = 2` interior:
/// the discrete form of "mean curvature is the gradient of `F`".
pub fn geometry_residual(state: &FlowState) -> Result<f64> {
    let field = state.field();
    let grid = *field.grid();
    let hess = hessian(field)?;
    let third = third_from_hessian(&hess)?;
    let (regime, gamma) = (state.regime(), state.gamma());
    let mut f = vec![0.0; grid.len()];
    for (p, h) in hess.interior() {
        f[p] = regime.blend(gamma, &h.eigenvalues())?;
    }
    let n = grid.dim();
    let inv = 0.5 / grid.spacing();
    let mut worst: f64 = 0.0;
    for (p, t) in third.interior() {
        let g = operator_gradient(regime, gamma, &hessian_at(field.values(), &grid, p))?;
        for k in 0..n {
            let s = grid.stride(k);
            let df = (f[p + s] - f[p - s]) * inv;
            let mut chain = 0.0;
            for i in 0..n {
                for j in 0..n {
                    chain += g.get(i, j) * t.get(i, j, k);
                }
            }
            worst = worst.max((df - chain).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::flow::BoundaryPolicy;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, SQRT_2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad(c: f64) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| 0.5 * c * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn field(dim: usize, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        ScalarField::sample(&Grid::new(dim, 1.0, 0.1).unwrap(), f).unwrap()
    }

    #[test]
    fn eigen_field_examples() {
        let f = field(2, |x| x[0] * x[0] + x[0] * x[1] + x[1] * x[1]);
        let e = eigen_field(&hessian(&f).unwrap());
        for (_, t) in e.interior() {
            assert_abs_diff_eq!(t.as_slice()[0], 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(t.as_slice()[1], 3.0, epsilon = 1e-10);
        }
        let e = eigen_field(&hessian(&field(2, |_| 0.0)).unwrap());
        assert!(e.interior().all(|(_, t)| t.as_slice() == [0.0, 0.0]));
    }

    #[test]
    fn condition_b_on_unit_quadratic() {
        let r = check_condition(
            &ConditionSpec::B {
                zeta: 0.3,
                rho: 1.0,
            },
            &field(2, quad(1.0)),
        )
        .unwrap();
        assert!(r.satisfied);
        assert_eq!(r.margin, 0.0);
        assert_abs_diff_eq!(r.lam_min, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.lam_max, 1.0, epsilon = 1e-10);
        let r = check_condition(
            &ConditionSpec::B {
                zeta: 0.3,
                rho: 0.9,
            },
            &field(2, quad(1.0)),
        )
        .unwrap();
        assert!(!r.satisfied);
        assert_abs_diff_eq!(r.margin, -0.1, epsilon = 1e-9);
    }

    #[test]
    fn condition_e_and_l_bounds() {
        // mpmath, 30 digits
        let e = ConditionSpec::E {
            tau: FRAC_PI_6,
            mu: 1.5,
            lam: 3.0,
        };
        let (lo, hi) = e.bounds().unwrap();
        assert_abs_diff_eq!(lo, 0.389_269_535_990_765_3, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, 2.510_589_879_550_408, epsilon = 1e-14);
        assert!(check_condition(&e, &field(2, quad(1.0))).unwrap().satisfied);

        let l = ConditionSpec::L {
            tau: FRAC_PI_3,
            eta: 0.1,
        };
        let (lo, hi) = l.bounds().unwrap();
        assert_abs_diff_eq!(lo, -1.475_496_508_210_124_3, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, 0.320_795_969_830_872_9, epsilon = 1e-14);
        let r = check_condition(&l, &field(2, |_| 0.0)).unwrap();
        assert!(r.satisfied && r.margin > 0.3);
    }

    #[test]
    fn condition_validation() {
        assert_eq!(ConditionSpec::A.bounds(), Err(Error::ConditionNotACone));
        assert!(ConditionSpec::E {
            tau: FRAC_PI_6,
            mu: 0.5,
            lam: 3.0
        }
        .validate()
        .is_err());
        assert!(ConditionSpec::E {
            tau: FRAC_PI_3,
            mu: 1.5,
            lam: 3.0
        }
        .validate()
        .is_err());
        assert!(ConditionSpec::L {
            tau: FRAC_PI_6,
            eta: 0.1
        }
        .validate()
        .is_err());
        assert!(ConditionSpec::L {
            tau: FRAC_PI_3,
            eta: 0.0
        }
        .validate()
        .is_err());
        assert!(ConditionSpec::B {
            zeta: 2.5,
            rho: 1.0
        }
        .validate()
        .is_err());
        assert!(ConditionSpec::B {
            zeta: 0.3,
            rho: 1.0
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn homogeneity_examples() {
        let radii = [0.5, 2.0, 3.0];
        let dirs: [&[f64]; 3] = [&[1.0, 0.0], &[0.6, 0.8], &[-0.3, 0.2]];
        let sq = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        assert_eq!(homogeneity_defect(sq, &radii, &dirs).unwrap(), 0.0);
        let shifted = |x: &[f64]| x[0] * x[0] + x[1] * x[1] + 1.0;
        assert_abs_diff_eq!(
            homogeneity_defect(shifted, &radii, &dirs).unwrap(),
            3.0,
            epsilon = 1e-15
        );
        let mixed = |x: &[f64]| x[0] * x[0] + x[0] * x[1];
        assert!(homogeneity_defect(mixed, &radii, &dirs).unwrap() < 1e-15);
        assert!(homogeneity_defect(sq, &[0.0], &dirs).is_err());
    }

    #[test]
    fn power_law_examples() {
        let s: Vec<(f64, f64)> = (1..=5).map(|t| (t as f64, 3.0 / t as f64)).collect();
        let fit = fit_power_law(&s).unwrap();
        assert_abs_diff_eq!(fit.alpha, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.c, 3.0, epsilon = 1e-12);
        assert!(fit.residual < 1e-14);

        let s: Vec<(f64, f64)> = (1..=5).map(|t| (t as f64, 7.0)).collect();
        assert_abs_diff_eq!(fit_power_law(&s).unwrap().alpha, 0.0, epsilon = 1e-14);

        assert!(matches!(
            fit_power_law(&s[..4]),
            Err(Error::InsufficientSamples { .. })
        ));
        let mut bad = s.clone();
        bad[2].1 = 0.0;
        assert!(matches!(
            fit_power_law(&bad),
            Err(Error::NonPositiveSample { index: 2, .. })
        ));
    }

    #[test]
    fn noisy_power_law_matches_independent_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<(f64, f64)> = (1..=40)
            .map(|k| {
                let t = 0.25 * k as f64;
                (
                    t,
                    2.0 * t.powf(-1.5) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        let fit = fit_power_law(&s).unwrap();
        assert!((1.4..=1.6).contains(&fit.alpha));

        let a =
            nalgebra::DMatrix::from_fn(s.len(), 2, |i, j| if j == 0 { 1.0 } else { s[i].0.ln() });
        let b = nalgebra::DVector::from_iterator(s.len(), s.iter().map(|p| p.1.ln()));
        let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
        assert_abs_diff_eq!(fit.alpha, -x[1], epsilon = 1e-10);
        assert_abs_diff_eq!(fit.c.ln(), x[0], epsilon = 1e-10);
    }

    #[test]
    fn transient_window_is_dropped() {
        let mut s: Vec<(f64, f64)> = (1..=10).map(|k| (k as f64, 5.0 / k as f64)).collect();
        s[0].1 = 100.0;
        s[1].1 = 50.0;
        let fit = decay_exponent(&s).unwrap();
        assert_eq!(fit.samples, 8);
        assert_abs_diff_eq!(fit.alpha, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn induced_metric_examples() {
        assert_eq!(
            induced_metric(FRAC_PI_2, &SymMatrix::zeros(2)),
            SymMatrix::identity(2)
        );
        let g = induced_metric(FRAC_PI_4, &SymMatrix::identity(2));
        assert_abs_diff_eq!(g.get(0, 0), 2.0 * SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(0, 1), 0.0);
        let g = induced_metric(0.0, &SymMatrix::diagonal(&[1.0, 2.0]));
        assert_eq!(g, SymMatrix::diagonal(&[2.0, 4.0]));
    }

    #[test]
    fn geometry_residual_vanishes_on_quadratics() {
        for tau in [0.0, FRAC_PI_6, FRAC_PI_4, FRAC_PI_3, FRAC_PI_2] {
            let r = regime_of(tau).unwrap();
            let s =
                FlowState::new(field(2, quad(0.7)), 0.0, r, 1.0, BoundaryPolicy::Frozen).unwrap();
            assert!(geometry_residual(&s).unwrap() < 1e-9);
        }
    }

    fn residual_at(h: f64, f: &dyn Fn(&[f64]) -> f64, regime: TauRegime) -> f64 {
        let g = Grid::new(2, 0.5, h).unwrap();
        let s = FlowState::new(
            ScalarField::sample(&g, f).unwrap(),
            0.0,
            regime,
            1.0,
            BoundaryPolicy::Frozen,
        )
        .unwrap();
        geometry_residual(&s).unwrap()
    }

    #[test]
    fn geometry_residual_is_second_order() {
        let sine = |x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]) + 0.01 * (5.0 * x[0]).sin();
        let cubic = |x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]) + 0.2 * x[0] * x[0] * x[1];
        for (f, regime) in [
            (&sine as &dyn Fn(&[f64]) -> f64, TauRegime::log_det()),
            (&cubic, TauRegime::log_det()),
            (&cubic, TauRegime::arctan_sum()),
            (&cubic, regime_of(FRAC_PI_6).unwrap()),
        ] {
            let coarse = residual_at(0.04, f, regime);
            let fine = residual_at(0.02, f, regime);
            let order = (coarse / fine).log2();
            assert!(coarse < 1e-2, "{coarse}");
            assert!((1.8..=2.2).contains(&order), "order {order}");
        }
    }

    #[test]
    fn operator_gradient_inverts_induced_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for tau in [0.0, FRAC_PI_6, FRAC_PI_4, FRAC_PI_3, FRAC_PI_2] {
            let r = regime_of(tau).unwrap();
            for _ in 0..50 {
                let lo = r.cone_lower().unwrap_or(-3.0).max(-3.0) + 0.05;
                let e: Vec<f64> = (0..3).map(|_| rng.gen_range(lo..lo + 3.0)).collect();
                let theta: f64 = rng.gen_range(0.0..6.0);
                let (s, c) = theta.sin_cos();
                let q = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
                let h = SymMatrix::from_eigen(&e, &q);
                let g = induced_metric(tau, &h);
                let gi = operator_gradient(&r, 1.0, &h).unwrap();
                for i in 0..3 {
                    for j in 0..3 {
                        let v: f64 = (0..3).map(|k| g.get(i, k) * gi.get(k, j)).sum();
                        assert_abs_diff_eq!(v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-9);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn enlarging_cone_never_breaks_satisfaction(
            zeta in 0.05f64..0.9, rho in 0.5f64..2.0, dz in 0.0f64..0.05, dr in 0.0f64..1.0, c in -0.5f64..2.0,
        ) {
            let f = field(2, move |x| 0.5 * c * x[0] * x[0] + 0.3 * x[1] * x[1] + 0.1 * x[0] * x[1]);
            let small = check_condition(&ConditionSpec::B { zeta, rho }, &f).unwrap();
            let big = check_condition(&ConditionSpec::B { zeta: zeta - dz, rho: rho + dr }, &f).unwrap();
            prop_assert!(!small.satisfied || big.satisfied);
            prop_assert!(big.margin >= small.margin);
        }

        #[test]
        fn exact_power_laws_recover_alpha(alpha in -2.0f64..3.0, c in 0.1f64..10.0) {
            let s: Vec<(f64, f64)> = (1..=12).map(|k| {
                let t = 0.3 * k as f64;
                (t, c * t.powf(-alpha))
            }).collect();
            let fit = fit_power_law(&s).unwrap();
            prop_assert!((fit.alpha - alpha).abs() <= 1e-12);
        }

        #[test]
        fn metric_eigenvalues_are_reciprocal_slopes(tau in 0.0f64..FRAC_PI_2, l in -0.9f64..5.0) {
            let r = regime_of(tau).unwrap();
            prop_assume!(r.admits_with_margin(l, 1e-3));
            let g = induced_metric(tau, &SymMatrix::diagonal(&[l]));
            let (s, c) = tau.sin_cos();
            prop_assert!((g.get(0, 0) - (s * (1.0 + l * l) + 2.0 * c * l)).abs() <= 1e-14);
            prop_assert!((g.get(0, 0) * r.derivative(l).unwrap() - 1.0).abs() <= 1e-10);
        }
    }
}
