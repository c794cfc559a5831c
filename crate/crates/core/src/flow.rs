//! Explicit time integration of `∂u/∂t = γ F_τ(D²u) + (1 − γ) Δu` on a box.
//!
//! Interior points (index distance ≥ [`BOUNDARY_RING`] from every face) are
//! advanced with Heun's method; the two outer rings are owned by a
//! [`BoundaryPolicy`]. Each stage eigen-decomposes the finite-difference
//! Hessian at every interior point.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{invalid, Error, Result};
use crate::field::{hessian_at, sup_derivative_norm, Grid, ScalarField};
use crate::linalg::SymMatrix;
use crate::operator::{check_gamma, TauRegime};

/// Width of the policy-owned ring; matches the radius of the third-order
/// stencil.
pub const BOUNDARY_RING: usize = 2;
/// States closer than this to the edge of the admissibility cone are
/// rejected: `dF/dλ` blows up there.
pub const ADMISSIBILITY_MARGIN: f64 = 1e-9;
pub const DEFAULT_SAFETY: f64 = 0.5;
pub const DEFAULT_MONITOR_STRIDE: usize = 10;

pub type ExactFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// How the boundary ring evolves.
#[derive(Clone)]
pub enum BoundaryPolicy {
    /// Pinned to the initial data (Cauchy–Dirichlet on the box).
    Frozen,
    /// A known space-time solution `(x, t) ↦ u`.
    Exact(ExactFn),
    /// `u(x, t) = u₀(x) + F(D²u₀(x))·(t − t₀)`: exact wherever `u₀` is
    /// locally quadratic.
    QuadraticHold,
}

impl BoundaryPolicy {
    pub fn exact<F>(f: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        BoundaryPolicy::Exact(Arc::new(f))
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoundaryPolicy::Frozen => "frozen",
            BoundaryPolicy::Exact(_) => "exact",
            BoundaryPolicy::QuadraticHold => "quadratic-hold",
        }
    }
}

impl fmt::Debug for BoundaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Boundary data captured when the state was created.
#[derive(Debug)]
struct Anchor {
    start_time: f64,
    ring: Vec<usize>,
    values: Vec<f64>,
    rates: Vec<f64>,
}

/// The evolving object: a field, the current time, and the equation.
#[derive(Clone, Debug)]
pub struct FlowState {
    field: ScalarField,
    time: f64,
    regime: TauRegime,
    gamma: f64,
    boundary: BoundaryPolicy,
    anchor: Arc<Anchor>,
    // operator values at the interior, reused by the next step
    rates: Option<Arc<Vec<f64>>>,
}

/// `γ F_τ(λ(H)) + (1 − γ) tr H`, or the offending eigenvalue.
#[inline]
pub fn rate_at(regime: &TauRegime, gamma: f64, hess: &SymMatrix) -> core::result::Result<f64, f64> {
    let trace = hess.trace();
    if gamma == 0.0 {
        return Ok(trace);
    }
    let eigs = hess.eigenvalues();
    let values = eigs.as_slice();
    if let Some(&bad) = values
        .iter()
        .find(|&&l| !regime.admits_with_margin(l, ADMISSIBILITY_MARGIN))
    {
        return Err(bad);
    }
    let f = regime.eval_unchecked(values);
    Ok(if gamma == 1.0 {
        f
    } else {
        gamma * f + (1.0 - gamma) * trace
    })
}

/// Largest diffusion coefficient `γ F'(λ) + (1 − γ)` over the eigenvalues of
/// `hess`.
#[inline]
pub fn max_coefficient(regime: &TauRegime, gamma: f64, hess: &SymMatrix) -> f64 {
    if gamma == 0.0 {
        return 1.0;
    }
    hess.eigenvalues()
        .as_slice()
        .iter()
        .map(|&l| gamma * regime.term_derivative(l) + (1.0 - gamma))
        .fold(0.0, f64::max)
}

fn clamp_inside(grid: &Grid, p: usize) -> usize {
    let m = grid.points_per_axis();
    let mut idx = grid.multi_index(p);
    for i in idx.iter_mut().take(grid.dim()) {
        *i = (*i).clamp(1, m - 2);
    }
    grid.flat_index(&idx)
}

impl FlowState {
    pub fn new(
        field: ScalarField,
        time: f64,
        regime: TauRegime,
        gamma: f64,
        boundary: BoundaryPolicy,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        if !time.is_finite() {
            return Err(invalid("time must be finite"));
        }
        let grid = *field.grid();
        if grid.points_per_axis() < 2 * BOUNDARY_RING + 1 {
            return Err(Error::GridTooSmall {
                points_per_axis: grid.points_per_axis(),
                needed: 2 * BOUNDARY_RING + 1,
            });
        }
        let ring: Vec<usize> = (0..grid.len())
            .filter(|&p| grid.ring_distance(p) < BOUNDARY_RING)
            .collect();
        let values: Vec<f64> = ring.iter().map(|&p| field.values()[p]).collect();
        let rates = match boundary {
            BoundaryPolicy::QuadraticHold => {
                let mut rates = Vec::with_capacity(ring.len());
                for &p in &ring {
                    let q = clamp_inside(&grid, p);
                    let hess = hessian_at(field.values(), &grid, q);
                    let r = rate_at(&regime, gamma, &hess).map_err(|lambda| Error::ConeExit {
                        point: p,
                        lambda,
                        time,
                    })?;
                    rates.push(r);
                }
                rates
            }
            _ => Vec::new(),
        };
        let mut state = Self {
            field,
            time,
            regime,
            gamma,
            boundary,
            anchor: Arc::new(Anchor {
                start_time: time,
                ring,
                values,
                rates,
            }),
            rates: None,
        };
        let rates = state.interior_rates(state.field.values(), time)?;
        state.rates = Some(Arc::new(rates));
        Ok(state)
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn regime(&self) -> &TauRegime {
        &self.regime
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn boundary(&self) -> &BoundaryPolicy {
        &self.boundary
    }

    /// Operator values on the interior; zero on the boundary ring.
    pub fn rates(&self) -> &[f64] {
        self.rates.as_deref().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Replaces the field, keeping equation and boundary anchor.
    pub(crate) fn with_field(&self, field: ScalarField, time: f64) -> Result<Self> {
        let mut next = Self {
            field,
            time,
            regime: self.regime,
            gamma: self.gamma,
            boundary: self.boundary.clone(),
            anchor: self.anchor.clone(),
            rates: None,
        };
        let rates = next.interior_rates(next.field.values(), time)?;
        next.rates = Some(Arc::new(rates));
        Ok(next)
    }

    pub(crate) fn interior_rates(&self, values: &[f64], time: f64) -> Result<Vec<f64>> {
        let grid = *self.field.grid();
        let mut out = vec![0.0; grid.len()];
        for p in grid.interior(BOUNDARY_RING) {
            let hess = hessian_at(values, &grid, p);
            out[p] =
                rate_at(&self.regime, self.gamma, &hess).map_err(|lambda| Error::ConeExit {
                    point: p,
                    lambda,
                    time,
                })?;
        }
        Ok(out)
    }

    pub(crate) fn apply_boundary(&self, values: &mut [f64], time: f64) {
        let grid = self.field.grid();
        let a = &self.anchor;
        match &self.boundary {
            BoundaryPolicy::Frozen => {
                for (&p, &v) in a.ring.iter().zip(&a.values) {
                    values[p] = v;
                }
            }
            BoundaryPolicy::Exact(f) => {
                for &p in &a.ring {
                    let x = grid.point(p);
                    values[p] = f(&x[..grid.dim()], time);
                }
            }
            BoundaryPolicy::QuadraticHold => {
                let elapsed = time - a.start_time;
                for ((&p, &v), &r) in a.ring.iter().zip(&a.values).zip(&a.rates) {
                    values[p] = v + r * elapsed;
                }
            }
        }
    }

    /// One Heun step of length `dt`.
    pub fn step(&self, dt: f64) -> Result<FlowState> {
        self.advance(dt, self.time + dt)
    }

    /// Heun step of length `dt` that lands exactly on `new_time`.
    fn advance(&self, dt: f64, new_time: f64) -> Result<FlowState> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(invalid("time step must be non-negative and finite"));
        }
        if dt == 0.0 {
            return Ok(self.clone());
        }
        let grid = *self.field.grid();
        let u = self.field.values();
        let k1 = match &self.rates {
            Some(r) => r.clone(),
            None => Arc::new(self.interior_rates(u, self.time)?),
        };
        let interior: Vec<usize> = grid.interior(BOUNDARY_RING).collect();

        let mut pred = u.to_vec();
        for &p in &interior {
            pred[p] = u[p] + dt * k1[p];
        }
        self.apply_boundary(&mut pred, new_time);
        let k2 = self.interior_rates(&pred, new_time)?;

        let mut next = u.to_vec();
        let half = 0.5 * dt;
        for &p in &interior {
            next[p] = u[p] + half * (k1[p] + k2[p]);
        }
        self.apply_boundary(&mut next, new_time);
        if let Some(p) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: p,
                value: next[p],
            });
        }
        // admissibility of the result is checked by computing its rates
        self.with_field(ScalarField::from_values_unchecked(grid, next), new_time)
    }
}

/// `safety · h² / (2 n G_max)` with `G_max` the largest coefficient
/// `γ F'(λᵢ) + (1 − γ)` over interior points.
pub fn stable_dt(state: &FlowState, safety: f64) -> Result<f64> {
    if !(safety > 0.0) {
        return Err(invalid("safety factor must be positive"));
    }
    let grid = state.grid();
    let values = state.field.values();
    let mut gmax: f64 = 0.0;
    for p in grid.interior(BOUNDARY_RING) {
        let hess = hessian_at(values, grid, p);
        if state.gamma > 0.0 {
            if let Err(lambda) = rate_at(&state.regime, state.gamma, &hess) {
                return Err(Error::ConeExit {
                    point: p,
                    lambda,
                    time: state.time,
                });
            }
        }
        gmax = gmax.max(max_coefficient(&state.regime, state.gamma, &hess));
    }
    let h = grid.spacing();
    Ok(safety * h * h / (2.0 * grid.dim() as f64 * gmax))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitor {
    pub t: f64,
    pub lam_min: f64,
    pub lam_max: f64,
    pub d2_sup: f64,
    pub d3_sup: f64,
    pub pde_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub field: ScalarField,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    /// `dt` is recomputed and monitors recorded every this many steps.
    pub monitor_stride: usize,
    pub safety: f64,
    /// Overrides the CFL step.
    pub fixed_dt: Option<f64>,
}

impl RunConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            snapshot_times: Vec::new(),
            monitor_stride: DEFAULT_MONITOR_STRIDE,
            safety: DEFAULT_SAFETY,
            fixed_dt: None,
        }
    }

    pub fn snapshots(mut self, times: &[f64]) -> Self {
        self.snapshot_times = times.to_vec();
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.monitor_stride = stride;
        self
    }

    pub fn fixed_dt(mut self, dt: f64) -> Self {
        self.fixed_dt = Some(dt);
        self
    }
}

/// Output of [`run`]. When a step fails, `failure` holds the error and the
/// rest is the partial trajectory up to the last good state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub monitors: Vec<Monitor>,
    pub failure: Option<Error>,
    pub steps: usize,
    pub final_state: FlowState,
}

impl Trajectory {
    pub fn snapshot_at(&self, time: f64) -> Option<&ScalarField> {
        let tol = 1e-12 * time.abs().max(1.0);
        self.snapshots
            .iter()
            .find(|s| (s.time - time).abs() <= tol)
            .map(|s| &s.field)
    }

    pub fn lam_range(&self) -> (f64, f64) {
        self.monitors
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                (lo.min(m.lam_min), hi.max(m.lam_max))
            })
    }
}

/// Monitor values for `state`. `previous` is the state one step earlier and
/// enables the time-discretization residual
/// `|(u − u_prev)/Δt − ½(F_prev + F)|`.
pub fn monitor(state: &FlowState, previous: Option<&FlowState>) -> Result<Monitor> {
    let grid = state.grid();
    let values = state.field.values();
    let mut lam_min = f64::INFINITY;
    let mut lam_max = f64::NEG_INFINITY;
    for p in grid.interior(BOUNDARY_RING) {
        let e = hessian_at(values, grid, p).eigenvalues();
        lam_min = lam_min.min(e.min());
        lam_max = lam_max.max(e.max());
    }
    let d2_sup = sup_derivative_norm(&state.field, 2)?;
    let d3_sup = sup_derivative_norm(&state.field, 3)?;
    let pde_residual = match previous {
        Some(prev) if state.time > prev.time => {
            let dt = state.time - prev.time;
            let (r0, r1) = (prev.rates(), state.rates());
            let u0 = prev.field.values();
            grid.interior(BOUNDARY_RING)
                .map(|p| ((values[p] - u0[p]) / dt - 0.5 * (r0[p] + r1[p])).abs())
                .fold(0.0, f64::max)
        }
        _ => 0.0,
    };
    Ok(Monitor {
        t: state.time,
        lam_min,
        lam_max,
        d2_sup,
        d3_sup,
        pde_residual,
    })
}

/// Steps from `initial` to `config.t_end`, landing exactly on every snapshot
/// time by shortening the step before it.
pub fn run(initial: &FlowState, config: &RunConfig) -> Result<Trajectory> {
    let t0 = initial.time;
    let t_end = config.t_end;
    if !(t_end >= t0) {
        return Err(invalid("t_end must not precede the initial time"));
    }
    if config.monitor_stride == 0 {
        return Err(invalid("monitor stride must be at least 1"));
    }
    if let Some(dt) = config.fixed_dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("fixed dt must be positive"));
        }
    }
    let mut targets: Vec<f64> = config.snapshot_times.clone();
    if targets.iter().any(|&t| !(t >= t0 && t <= t_end)) {
        return Err(invalid("snapshot times must lie in [t0, t_end]"));
    }
    targets.push(t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    let mut snapshots = Vec::new();
    let mut monitors = vec![monitor(initial, None)?];
    let mut targets = targets.into_iter().peekable();
    if targets.peek() == Some(&t0) {
        snapshots.push(Snapshot {
            time: t0,
            field: initial.field.clone(),
        });
        targets.next();
    }

    let mut state = initial.clone();
    let mut steps = 0usize;
    let mut dt = 0.0;
    let mut failure = None;
    while let Some(&target) = targets.peek() {
        if steps.is_multiple_of(config.monitor_stride) || dt == 0.0 {
            dt = match config.fixed_dt {
                Some(dt) => dt,
                None => match stable_dt(&state, config.safety) {
                    Ok(dt) => dt,
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                },
            };
        }
        let remaining = target - state.time;
        let hit = remaining <= dt * (1.0 + 1e-9);
        let (h, new_time) = if hit {
            (remaining, target)
        } else {
            (dt, state.time + dt)
        };
        let next = match state.advance(h, new_time) {
            Ok(next) => next,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        steps += 1;
        if hit || steps.is_multiple_of(config.monitor_stride) {
            monitors.push(monitor(&next, Some(&state))?);
        }
        state = next;
        if hit {
            snapshots.push(Snapshot {
                time: target,
                field: state.field.clone(),
            });
            targets.next();
        }
    }
    Ok(Trajectory {
        snapshots,
        monitors,
        failure,
        steps,
        final_state: state,
    })
}
