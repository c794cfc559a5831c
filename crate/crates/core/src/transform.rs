//! Potential maps carrying the ratio branches to the classical ones.
//!
//! With `a = cot τ`, `b = √|a² − 1|`, the map
//! `φ(x) = s_u·u(s_x·x) + (a/2b)|x|² + κ t + C`, `s_u = b/√(a²+1)`,
//! `s_x = (a²+1)^{1/4}/b`, sends Hessian eigenvalues `λ` to `ν = (λ + a)/b`.
//! It carries the cones of conditions E and L exactly onto `[μ, Λ]` and
//! `[−(1+η), 1+η]`. For the flows themselves:
//!
//! - log side (`τ < π/4`): `∂φ/∂t = ½ Σ ln((ν−1)/(ν+1))`, which is not the
//!   Monge–Ampère rate `½ Σ ln ν`. [`cross_flow_consistency`] measures the gap.
//! - arctan side (`τ > π/4`): `∂φ/∂t = Σ atan ν − nπ/4 + κ`, so `κ = nπ/4`
//!   gives exactly the special Lagrangian rate `Σ atan ν`. A constant
//!   `C = −nπ/4` with `κ = 0` is kept as [`ArctanVariant::LiteralConstant`].

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};

#[allow(unused_imports)] // unused when std float methods are in scope
use num_traits::Float;

use crate::analysis::ConditionSpec;
use crate::error::{invalid, Error, Result};
use crate::field::{Grid, ScalarField};
use crate::flow::{run, BoundaryPolicy, FlowState, RunConfig, BOUNDARY_RING};
use crate::operator::{regime_of, Branch, TauRegime, TAU_TOLERANCE};

/// How the arctan-side map handles the `−nπ/4` left over by the shift
/// identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArctanVariant {
    /// `κ = nπ/4`: the mapped flow is exactly the `Σ atan ν` flow.
    TimeLinear,
    /// `C = −nπ/4`, `κ = 0`: the mapped flow drifts by `−nπ/4` per unit time.
    LiteralConstant,
}

impl ArctanVariant {
    pub fn name(self) -> &'static str {
        match self {
            ArctanVariant::TimeLinear => "time-linear",
            ArctanVariant::LiteralConstant => "literal-constant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    pub source_tau: f64,
    pub dim: usize,
    pub a: f64,
    pub b: f64,
    pub scale_x: f64,
    pub scale_u: f64,
    pub quad_coeff: f64,
    pub time_linear: f64,
    pub constant: f64,
}

impl TransformSpec {
    /// `variant` only matters on the arctan side.
    pub fn new(source_tau: f64, dim: usize, variant: ArctanVariant) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension { dim });
        }
        let regime = regime_of(source_tau)?;
        let (time_linear, constant) = match regime.branch() {
            Branch::LogRatio => (0.0, 0.0),
            Branch::ArctanRatio => {
                let shift = dim as f64 * FRAC_PI_4;
                match variant {
                    ArctanVariant::TimeLinear => (shift, 0.0),
                    ArctanVariant::LiteralConstant => (0.0, -shift),
                }
            }
            _ => return Err(invalid(alloc::format!(
                "tau must lie in (0, pi/4) or (pi/4, pi/2) for a potential map, got {source_tau}"
            ))),
        };
        let (a, b) = (regime.a(), regime.b());
        let s = (a * a + 1.0).sqrt();
        Ok(Self {
            source_tau,
            dim,
            a,
            b,
            scale_x: s.sqrt() / b,
            scale_u: b / s,
            quad_coeff: a / (2.0 * b),
            time_linear,
            constant,
        })
    }

    pub fn source_regime(&self) -> TauRegime {
        regime_of(self.source_tau).expect("validated in new")
    }

    /// `LogDet` on the log side, `ArctanSum` on the arctan side.
    pub fn target_regime(&self) -> TauRegime {
        if self.source_tau < FRAC_PI_4 {
            TauRegime::log_det()
        } else {
            TauRegime::arctan_sum()
        }
    }

    /// `ν = (λ + a)/b`.
    pub fn map_eigenvalue(&self, lambda: f64) -> f64 {
        (lambda + self.a) / self.b
    }

    /// The grid whose nodes `s_x·x` are exactly the nodes of `source`.
    pub fn image_grid(&self, source: &Grid) -> Result<Grid> {
        Grid::with_half_points(
            source.dim(),
            source.half_points(),
            source.spacing() / self.scale_x,
        )
    }
}

/// `φ = s_u·u(s_x x) + (a/2b)|x|² + κ t + C` sampled on `target`.
pub fn map_potential(
    spec: &TransformSpec,
    field: &ScalarField,
    t: f64,
    target: &Grid,
) -> Result<ScalarField> {
    let dim = field.grid().dim();
    if target.dim() != dim || spec.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: target.dim(),
        });
    }
    let offset = spec.time_linear * t + spec.constant;
    let mut values = Vec::with_capacity(target.len());
    for p in 0..target.len() {
        let x = target.point(p);
        let mut y = [0.0; 3];
        let mut r2 = 0.0;
        for i in 0..dim {
            y[i] = spec.scale_x * x[i];
            r2 += x[i] * x[i];
        }
        values.push(spec.scale_u * field.interpolate(&y[..dim])? + spec.quad_coeff * r2 + offset);
    }
    ScalarField::from_values(target, values)
}

/// Image of a condition cone under `λ ↦ (λ + a)/b`.
pub fn map_condition(spec: &TransformSpec, cond: &ConditionSpec) -> Result<(f64, f64)> {
    let matches = match cond {
        ConditionSpec::E { .. } => spec.source_tau < FRAC_PI_4,
        ConditionSpec::L { .. } => spec.source_tau > FRAC_PI_4,
        _ => false,
    };
    if !matches || (cond.tau() - spec.source_tau).abs() > TAU_TOLERANCE {
        return Err(invalid(alloc::format!(
            "condition {} does not belong to tau = {}",
            cond.name(),
            spec.source_tau
        )));
    }
    let (lo, hi) = cond.bounds()?;
    Ok((spec.map_eigenvalue(lo), spec.map_eigenvalue(hi)))
}

/// Both sides of `atan((λ+a−b)/(λ+a+b)) = atan((λ+a)/b) − π/4` and their
/// difference. The identity holds on the principal branch `λ > −a − b`.
pub fn arctan_shift_identity(lambda: f64, regime: &TauRegime) -> Result<(f64, f64, f64)> {
    if regime.branch() != Branch::ArctanRatio {
        return Err(invalid(
            "the shift identity needs the arctan ratio branch (pi/4 < tau < pi/2)",
        ));
    }
    let (a, b) = (regime.a(), regime.b());
    let (lhs, rhs) = if lambda.is_infinite() {
        let s = lambda.signum();
        (FRAC_PI_4, s * FRAC_PI_2 - FRAC_PI_4)
    } else {
        let den = lambda + a + b;
        if den.abs() <= 4.0 * f64::EPSILON * (lambda.abs() + a + b) {
            return Err(Error::Pole { lambda });
        }
        (
            ((lambda + a - b) / den).atan(),
            ((lambda + a) / b).atan() - FRAC_PI_4,
        )
    };
    Ok((lhs, rhs, lhs - rhs))
}

/// Per-unit-time drift between the mapped log-ratio flow and Monge–Ampère
/// on `ν I` data: `(n/2)·[ln((ν−1)/(ν+1)) − ln ν]`.
pub fn log_gap_rate(nu: f64, dim: usize) -> f64 {
    0.5 * dim as f64 * (((nu - 1.0) / (nu + 1.0)).ln() - nu.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantGap {
    pub variant: &'static str,
    pub time_linear: f64,
    pub constant: f64,
    /// `‖map(flow_source(u₀), t) − flow_target(map(u₀, 0), t)‖∞` per time.
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub source_tau: f64,
    pub target_branch: Branch,
    pub times: Vec<f64>,
    pub variants: Vec<VariantGap>,
    pub target_grid: Grid,
}

/// Runs (i) the source flow then the map, and (ii) the map then the target
/// flow, and compares them at `samples + 1` equally spaced times in
/// `[0, t_end]`.
///
/// Both runs use [`BoundaryPolicy::QuadraticHold`], and the target grid is
/// the exact image of the source grid, so no interpolation enters.
pub fn cross_flow_consistency(
    source_tau: f64,
    u0: &ScalarField,
    t_end: f64,
    samples: usize,
) -> Result<ConsistencyReport> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid("t_end must be non-negative"));
    }
    let samples = if t_end == 0.0 { 0 } else { samples.max(1) };
    let times: Vec<f64> = (0..=samples)
        .map(|k| {
            if k == samples {
                t_end
            } else {
                t_end * k as f64 / samples as f64
            }
        })
        .collect();
    let dim = u0.grid().dim();
    let base = TransformSpec::new(source_tau, dim, ArctanVariant::TimeLinear)?;
    let variants: Vec<ArctanVariant> = if source_tau < FRAC_PI_4 {
        vec![ArctanVariant::TimeLinear]
    } else {
        vec![ArctanVariant::TimeLinear, ArctanVariant::LiteralConstant]
    };
    let target_grid = base.image_grid(u0.grid())?;

    let source = FlowState::new(
        u0.clone(),
        0.0,
        base.source_regime(),
        1.0,
        BoundaryPolicy::QuadraticHold,
    )?;
    let path_i = run(&source, &RunConfig::new(t_end).snapshots(&times))?;
    if let Some(e) = path_i.failure {
        return Err(e);
    }

    let mut out = Vec::new();
    for variant in variants {
        let spec = TransformSpec::new(source_tau, dim, variant)?;
        let mapped0 = map_potential(&spec, u0, 0.0, &target_grid)?;
        let target = FlowState::new(
            mapped0,
            0.0,
            spec.target_regime(),
            1.0,
            BoundaryPolicy::QuadraticHold,
        )?;
        let path_ii = run(&target, &RunConfig::new(t_end).snapshots(&times))?;
        if let Some(e) = path_ii.failure {
            return Err(e);
        }
        let mut gaps = Vec::with_capacity(times.len());
        for &t in &times {
            let src = path_i
                .snapshot_at(t)
                .ok_or(Error::SnapshotMissing { time: t })?;
            let a = map_potential(&spec, src, t, &target_grid)?;
            let b = path_ii
                .snapshot_at(t)
                .ok_or(Error::SnapshotMissing { time: t })?;
            gaps.push(a.sup_distance_interior(b, BOUNDARY_RING)?);
        }
        out.push(VariantGap {
            variant: variant.name(),
            time_linear: spec.time_linear,
            constant: spec.constant,
            gaps,
        });
    }
    Ok(ConsistencyReport {
        source_tau,
        target_branch: base.target_regime().branch(),
        times,
        variants: out,
        target_grid,
    })
}
