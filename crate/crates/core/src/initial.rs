//! Initial-data presets with controlled Hessian bounds.
//!
//! Each preset is a quadratic `c|x|²/2` plus a perturbation whose amplitude
//! is picked so that the Hessian eigenvalues stay within a given fraction of
//! the room between `c` and a cone `[lower, upper]`.

use core::f64::consts::PI;

#[allow(unused_imports)] // unused when std float methods are in scope
use num_traits::Float;

use crate::error::{invalid, Result};

const PROFILE_SAMPLES: usize = 4096;

fn sum_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Distance from `c` to the nearer end of `[lower, upper]`, scaled by
/// `fraction`.
fn room(c: f64, lower: f64, upper: f64, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid("perturbation fraction must lie in (0, 1)"));
    }
    if !(c > lower && c < upper) {
        return Err(invalid(
            "quadratic coefficient must lie strictly inside the cone",
        ));
    }
    Ok(fraction * (c - lower).min(upper - c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, x: &[f64]) -> f64 {
        0.5 * self.c * sum_sq(x)
    }
}

/// `c|x|²/2 + ε·exp(1/(|(x − x₀)/r|² − 1))` inside radius `r`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedQuadratic {
    pub c: f64,
    pub epsilon: f64,
    pub radius: f64,
    pub center: [f64; 3],
}

/// `max |eigenvalue|` of the Hessian of the unit bump of radius `r`.
///
/// The bump is radial, so its Hessian eigenvalues are `φ''(ρ)` and `φ'(ρ)/ρ`.
pub fn bump_hessian_bound(radius: f64) -> f64 {
    let r2 = radius * radius;
    let mut worst: f64 = 0.0;
    for k in 1..PROFILE_SAMPLES {
        let rho = radius * k as f64 / PROFILE_SAMPLES as f64;
        let q = rho * rho / r2 - 1.0;
        let phi = (1.0 / q).exp();
        let g1 = -2.0 * rho / (r2 * q * q);
        let g2 = -2.0 / (r2 * q * q) + 8.0 * rho * rho / (r2 * r2 * q * q * q);
        worst = worst
            .max((phi * (g1 * g1 + g2)).abs())
            .max((phi * g1 / rho).abs());
    }
    // at ρ = 0 both eigenvalues equal φ''(0) = −2/(e r²)
    worst.max(2.0 / (core::f64::consts::E * r2))
}

impl PerturbedQuadratic {
    /// Chooses `ε` so the bump moves the Hessian by at most `fraction` of the
    /// distance from `c` to the cone `[lower, upper]`.
    pub fn within_cone(c: f64, radius: f64, lower: f64, upper: f64, fraction: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("bump radius must be positive"));
        }
        let epsilon = room(c, lower, upper, fraction)? / bump_hessian_bound(radius);
        Ok(Self {
            c,
            epsilon,
            radius,
            center: [0.0; 3],
        })
    }

    pub fn centered_at(mut self, center: [f64; 3]) -> Self {
        self.center = center;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let s = d2 / (self.radius * self.radius);
        let bump = if s < 1.0 {
            (1.0 / (s - 1.0)).exp()
        } else {
            0.0
        };
        0.5 * self.c * sum_sq(x) + self.epsilon * bump
    }
}

/// A 2-homogeneous profile. For `n = 2`, `½ r² (c + δ cos kθ)`; `n = 3` adds
/// `½ c x₃²`; `n = 1` uses `½ x² (c + δ sgn x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularProfile {
    pub c: f64,
    pub delta: f64,
    pub k: u32,
}

/// `max |eigenvalue|` of `[[cos kθ, −(k/2) sin kθ], [−(k/2) sin kθ, (1 − k²/2) cos kθ]]`,
/// the Hessian of `½ r² cos kθ` in the polar frame.
pub fn angular_hessian_bound(k: u32) -> f64 {
    let k = k as f64;
    let mut worst: f64 = 0.0;
    for i in 0..PROFILE_SAMPLES {
        let theta = 2.0 * PI * i as f64 / PROFILE_SAMPLES as f64;
        let (s, c) = (k * theta).sin_cos();
        let (a, b, d) = (c, -0.5 * k * s, (1.0 - 0.5 * k * k) * c);
        let mean = 0.5 * (a + d);
        let r = (0.5 * (a - d)).hypot(b);
        worst = worst.max((mean - r).abs()).max((mean + r).abs());
    }
    worst
}

impl AngularProfile {
    pub fn within_cone(c: f64, k: u32, lower: f64, upper: f64, fraction: f64) -> Result<Self> {
        if k == 0 {
            return Err(invalid("angular frequency must be at least 1"));
        }
        let delta = room(c, lower, upper, fraction)? / angular_hessian_bound(k);
        Ok(Self { c, delta, k })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match x.len() {
            1 => 0.5 * x[0] * x[0] * (self.c + self.delta * x[0].signum()),
            _ => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let theta = x[1].atan2(x[0]);
                let rest: f64 = x[2..].iter().map(|v| v * v).sum();
                0.5 * r2 * (self.c + self.delta * (self.k as f64 * theta).cos())
                    + 0.5 * self.c * rest
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{check_condition, homogeneity_defect, ConditionSpec};
    use crate::field::{Grid, ScalarField};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn bump_bound_matches_fd_hessian() {
        // central FD of the radial profile at a fine step as the oracle
        let r = 1.3;
        let f = |rho: f64| {
            let s = rho * rho / (r * r);
            if s < 1.0 {
                (1.0 / (s - 1.0)).exp()
            } else {
                0.0
            }
        };
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for i in 1..2000 {
            let rho = r * i as f64 / 2000.0;
            let d2 = (f(rho + h) - 2.0 * f(rho) + f(rho - h)) / (h * h);
            let d1 = (f(rho + h) - f(rho - h)) / (2.0 * h);
            worst = worst.max(d2.abs()).max((d1 / rho).abs());
        }
        assert_abs_diff_eq!(bump_hessian_bound(r), worst, epsilon = 1e-3 * worst);
    }

    #[test]
    fn perturbed_quadratic_respects_cone() {
        let p = PerturbedQuadratic::within_cone(0.2, 1.0, -0.7, 1.0, 0.5).unwrap();
        assert!(p.epsilon > 0.0);
        assert_abs_diff_eq!(p.eval(&[2.0, 0.0]), 0.4);
        let g = Grid::new(2, 2.0, 0.05).unwrap();
        let f = ScalarField::sample(&g, |x| p.eval(x)).unwrap();
        let rep = check_condition(
            &ConditionSpec::B {
                zeta: 0.3,
                rho: 1.0,
            },
            &f,
        )
        .unwrap();
        assert!(rep.satisfied, "{rep:?}");
        // eigenvalues spread over most of the allowed c ± 0.45
        assert!(
            rep.lam_min >= 0.2 - 0.45 * 1.01 && rep.lam_max <= 0.2 + 0.45 * 1.01,
            "{rep:?}"
        );
        assert!(rep.lam_max - rep.lam_min > 0.4, "{rep:?}");
    }

    #[test]
    fn coefficient_outside_cone_is_rejected() {
        assert!(PerturbedQuadratic::within_cone(1.0, 1.0, -0.7, 1.0, 0.5).is_err());
        assert!(AngularProfile::within_cone(-1.0, 4, -0.7, 1.0, 0.5).is_err());
        assert!(PerturbedQuadratic::within_cone(0.2, 1.0, -0.7, 1.0, 1.5).is_err());
    }

    #[test]
    fn angular_profile_is_homogeneous_and_in_cone() {
        let p = AngularProfile::within_cone(0.2, 4, -0.7, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(angular_hessian_bound(4), 7.0, epsilon = 1e-9);
        let dirs: [&[f64]; 3] = [&[1.0, 0.0], &[0.6, 0.8], &[-0.3, 0.2]];
        assert!(homogeneity_defect(|x| p.eval(x), &[0.5, 2.0, 3.0], &dirs).unwrap() < 1e-14);
        let g = Grid::new(2, 2.0, 0.05).unwrap();
        let f = ScalarField::sample(&g, |x| p.eval(x)).unwrap();
        let rep = check_condition(
            &ConditionSpec::B {
                zeta: 0.3,
                rho: 1.0,
            },
            &f,
        )
        .unwrap();
        assert!(rep.satisfied, "{rep:?}");
        let p3 = AngularProfile {
            c: 0.2,
            delta: 0.01,
            k: 4,
        };
        assert_abs_diff_eq!(p3.eval(&[0.0, 0.0, 2.0]), 0.4);
        let p1 = AngularProfile {
            c: 1.0,
            delta: 0.5,
            k: 1,
        };
        assert_eq!((p1.eval(&[2.0]), p1.eval(&[-2.0])), (3.0, 1.0));
    }

    proptest! {
        #[test]
        fn profiles_are_two_homogeneous(c in -0.5f64..0.9, k in 1u32..6, r in 0.1f64..5.0, th in 0.0f64..6.3) {
            let p = AngularProfile::within_cone(c, k, -0.7, 1.0, 0.5).unwrap();
            let x = [th.cos(), th.sin()];
            let y = [r * x[0], r * x[1]];
            prop_assert!((p.eval(&y) / (r * r) - p.eval(&x)).abs() <= 1e-13);
        }
    }
}
