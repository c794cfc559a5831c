//! Self-expanding solutions `u(x, t) = t·u(x/√t, 1)`.
//!
//! Their time-one slice solves `F_τ(D²u) = u − ½⟨x, Du⟩`. This module has the
//! residual of that equation, the rescaled view `t⁻¹u(√t x, t)` of a flow,
//! the normalized flow in `s = ln t` (where expanders are equilibria), and a
//! damped Newton solver for the stationary problem.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std float methods are in scope
use num_traits::Float;

use crate::analysis::{homogeneity_defect, operator_gradient};
use crate::error::{invalid, Error, Result};
use crate::field::{gradient_at, hessian_at, Grid, PointField, ScalarField};
use crate::flow::{rate_at, stable_dt, BoundaryPolicy, FlowState, Trajectory, BOUNDARY_RING};
use crate::linalg::SymMatrix;
use crate::operator::TauRegime;

/// Boundary data must be 2-homogeneous to this accuracy on sampled rays.
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-10;
pub const LINEAR_REDUCTION: f64 = 1e-8;
pub const LINEAR_MAX_ITERATIONS: usize = 200_000;
const MAX_HALVINGS: usize = 30;

/// `F_τ(D²u) − u + ½⟨x, Du⟩` on the `ring = 1` interior.
pub fn expander_residual(field: &ScalarField, regime: &TauRegime) -> Result<PointField<f64>> {
    let grid = *field.grid();
    if grid.points_per_axis() < 3 {
        return Err(Error::GridTooSmall {
            points_per_axis: grid.points_per_axis(),
            needed: 3,
        });
    }
    let mut data = vec![0.0; grid.len()];
    for p in grid.interior(1) {
        data[p] = residual_at(field.values(), &grid, regime, p)?;
    }
    Ok(PointField::new(grid, 1, data))
}

/// `sup |F_τ(D²u) − u + ½⟨x, Du⟩|` over the unknowns of an
/// [`ExpanderProblem`], the `ring = 2` interior. Outer rings hold boundary
/// data and are not required to satisfy the equation.
pub fn unknowns_residual(field: &ScalarField, regime: &TauRegime) -> Result<f64> {
    let grid = *field.grid();
    let mut worst: f64 = 0.0;
    for p in grid.interior(BOUNDARY_RING) {
        worst = worst.max(residual_at(field.values(), &grid, regime, p)?.abs());
    }
    Ok(worst)
}

#[inline]
fn residual_at(values: &[f64], grid: &Grid, regime: &TauRegime, p: usize) -> Result<f64> {
    let hess = hessian_at(values, grid, p);
    let f =
        rate_at(regime, 1.0, &hess).map_err(|lambda| Error::InadmissibleAt { point: p, lambda })?;
    let du = gradient_at(values, grid, p);
    let x = grid.point(p);
    let drift: f64 = (0..grid.dim()).map(|i| x[i] * du[i]).sum();
    Ok(f - values[p] + 0.5 * drift)
}

/// `r⁻² u(r x)` sampled on `target`.
pub fn dilate(field: &ScalarField, r: f64, target: &Grid) -> Result<ScalarField> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("dilation factor must be positive"));
    }
    let dim = field.grid().dim();
    if target.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: target.dim(),
        });
    }
    let inv = 1.0 / (r * r);
    let mut values = Vec::with_capacity(target.len());
    for p in 0..target.len() {
        let mut x = target.point(p);
        for c in x.iter_mut() {
            *c *= r;
        }
        values.push(inv * field.interpolate(&x[..dim])?);
    }
    Ok(ScalarField::from_values_unchecked(*target, values))
}

/// `v_t(x) = t⁻¹ u(√t x, t)` from the snapshot of `traj` at time `t`.
pub fn rescaled_snapshot(traj: &Trajectory, t: f64, target: &Grid) -> Result<ScalarField> {
    if !(t > 0.0) {
        return Err(invalid("rescaling needs t > 0"));
    }
    let field = traj
        .snapshot_at(t)
        .ok_or(Error::SnapshotMissing { time: t })?;
    dilate(field, t.sqrt(), target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    /// `d_k = ‖v_{t_{k+1}} − v_{t_k}‖∞`.
    pub diffs: Vec<f64>,
    /// `‖expander_residual(v_{t_last})‖∞`.
    pub final_residual: f64,
}

impl ConvergenceReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.diffs.windows(2).all(|w| w[1] < w[0])
    }
}

/// Target grid of half-width about `half_width` whose nodes, scaled by `√t`,
/// land on nodes of `source`. The expander residual of a rescaled view takes
/// second differences, which turn the `O(h²)` error of off-node interpolation
/// into an `O(1)` error; on aligned nodes no interpolation happens.
pub fn aligned_target(source: &Grid, t: f64, half_width: f64) -> Result<Grid> {
    if !(t > 0.0) {
        return Err(invalid("rescaling needs t > 0"));
    }
    let spacing = source.spacing() / t.sqrt();
    let half_points = (half_width / spacing).round().max(1.0) as usize;
    Grid::with_half_points(source.dim(), half_points, spacing)
}

/// Pair up consecutive rescaled views. Pass a target from
/// [`aligned_target`] for the last time so `final_residual` measures the
/// flow and not the interpolation.
pub fn convergence_report(
    traj: &Trajectory,
    target: &Grid,
    times: &[f64],
) -> Result<ConvergenceReport> {
    if times.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            found: times.len(),
        });
    }
    let views = times
        .iter()
        .map(|&t| rescaled_snapshot(traj, t, target))
        .collect::<Result<Vec<_>>>()?;
    let diffs = views
        .windows(2)
        .map(|w| w[1].sup_distance(&w[0]))
        .collect::<Result<Vec<_>>>()?;
    let regime = traj.final_state.regime();
    let final_residual = expander_residual(&views[views.len() - 1], regime)?.sup_abs();
    Ok(ConvergenceReport {
        times: times.to_vec(),
        diffs,
        final_residual,
    })
}

/// Upwind second-order first difference along `axis`, taking points on the
/// side the drift `½ y_i ∂_i` carries information from (the boundary side).
#[inline]
fn upwind_derivative(values: &[f64], grid: &Grid, p: usize, axis: usize, y: f64) -> f64 {
    let s = grid.stride(axis);
    let inv = 0.5 / grid.spacing();
    if y > 0.0 {
        (-3.0 * values[p] + 4.0 * values[p + s] - values[p + 2 * s]) * inv
    } else {
        (3.0 * values[p] - 4.0 * values[p - s] + values[p - 2 * s]) * inv
    }
}

fn normalized_rhs(state: &FlowState, values: &[f64], rates: &[f64]) -> Vec<f64> {
    let grid = state.grid();
    let mut out = vec![0.0; grid.len()];
    for p in grid.interior(BOUNDARY_RING) {
        let y = grid.point(p);
        let drift: f64 = (0..grid.dim())
            .map(|i| y[i] * upwind_derivative(values, grid, p, i, y[i]))
            .sum();
        out[p] = rates[p] - values[p] + 0.5 * drift;
    }
    out
}

/// `sup |F_τ(D²w) − w + ½⟨y, Dw⟩|` over the unknowns, with the upwind drift
/// stencil of [`normalized_step`]. Zero at a stationary point of that scheme.
pub fn normalized_residual(field: &ScalarField, regime: &TauRegime) -> Result<f64> {
    let grid = *field.grid();
    let values = field.values();
    let mut worst: f64 = 0.0;
    for p in grid.interior(BOUNDARY_RING) {
        let hess = hessian_at(values, &grid, p);
        let f = rate_at(regime, 1.0, &hess)
            .map_err(|lambda| Error::InadmissibleAt { point: p, lambda })?;
        let y = grid.point(p);
        let drift: f64 = (0..grid.dim())
            .map(|i| y[i] * upwind_derivative(values, &grid, p, i, y[i]))
            .sum();
        worst = worst.max((f - values[p] + 0.5 * drift).abs());
    }
    Ok(worst)
}

/// Step bound for the normalized flow: the diffusive bound of the flow and
/// `safety·h / max|y|` for the drift.
pub fn normalized_stable_ds(state: &FlowState, safety: f64) -> Result<f64> {
    let grid = state.grid();
    let drift = safety * grid.spacing() / grid.half_width();
    Ok(stable_dt(state, safety)?.min(drift))
}

/// One Heun step of `∂w/∂s = F_τ(D²w) − w + ½⟨y, Dw⟩`, the flow in the
/// variables `t = eˢ`, `w(y, s) = e^{−s}u(e^{s/2}y, eˢ)`. The boundary ring
/// follows the state's policy with `s` as its clock.
pub fn normalized_step(state: &FlowState, ds: f64) -> Result<FlowState> {
    if !(ds >= 0.0 && ds.is_finite()) {
        return Err(invalid("step must be non-negative and finite"));
    }
    if ds == 0.0 {
        return Ok(state.clone());
    }
    let grid = *state.grid();
    let s1 = state.time() + ds;
    let u = state.field().values();
    let k1 = normalized_rhs(state, u, state.rates());
    let interior: Vec<usize> = grid.interior(BOUNDARY_RING).collect();

    let mut pred = u.to_vec();
    for &p in &interior {
        pred[p] = u[p] + ds * k1[p];
    }
    state.apply_boundary(&mut pred, s1);
    let rates = state.interior_rates(&pred, s1)?;
    let k2 = normalized_rhs(state, &pred, &rates);

    let mut next = u.to_vec();
    for &p in &interior {
        next[p] = u[p] + 0.5 * ds * (k1[p] + k2[p]);
    }
    state.apply_boundary(&mut next, s1);
    if let Some(p) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            point: p,
            value: next[p],
        });
    }
    state.with_field(ScalarField::from_values_unchecked(grid, next), s1)
}

#[derive(Debug, Clone)]
pub struct NormalizedOutcome {
    pub state: FlowState,
    /// `‖w(s) − w(s − 1)‖∞` at the last check.
    pub increment: f64,
    pub settled: bool,
    pub steps: usize,
}

/// Runs the normalized flow in unit intervals of `s` until the change over
/// one interval is at most `tol`, or `s_max` is reached.
pub fn relax_normalized(
    state: &FlowState,
    tol: f64,
    s_max: f64,
    safety: f64,
) -> Result<NormalizedOutcome> {
    let mut current = state.clone();
    let mut steps = 0;
    let mut increment = f64::INFINITY;
    let s_start = state.time();
    while current.time() - s_start < s_max {
        let before = current.field().clone();
        let target = current.time() + 1.0;
        let ds = normalized_stable_ds(&current, safety)?;
        while current.time() < target {
            let h = ds.min(target - current.time());
            current = normalized_step(&current, h)?;
            steps += 1;
        }
        increment = current.field().sup_distance(&before)?;
        if increment <= tol {
            return Ok(NormalizedOutcome {
                state: current,
                increment,
                settled: true,
                steps,
            });
        }
    }
    Ok(NormalizedOutcome {
        state: current,
        increment,
        settled: false,
        steps,
    })
}

/// Stationary problem on a box: unknowns on the `ring = 2` interior, the
/// outer rings fixed to boundary data.
#[derive(Debug, Clone)]
pub struct ExpanderProblem {
    regime: TauRegime,
    guess: ScalarField,
}

fn sample_rays(dim: usize) -> Vec<[f64; 3]> {
    let mut dirs = Vec::new();
    match dim {
        1 => dirs.extend([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
        2 => {
            for k in 0..16 {
                let (s, c) = (core::f64::consts::PI * k as f64 / 8.0).sin_cos();
                dirs.push([c, s, 0.0]);
            }
        }
        _ => {
            for i in -1i32..=1 {
                for j in -1i32..=1 {
                    for k in -1i32..=1 {
                        if (i, j, k) != (0, 0, 0) {
                            let n = ((i * i + j * j + k * k) as f64).sqrt();
                            dirs.push([i as f64 / n, j as f64 / n, k as f64 / n]);
                        }
                    }
                }
            }
        }
    }
    dirs
}

impl ExpanderProblem {
    /// Boundary values from 2-homogeneous data `U₀`, checked on sampled rays.
    pub fn homogeneous<F>(regime: TauRegime, u0: F, guess: &ScalarField) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let dim = guess.grid().dim();
        let rays = sample_rays(dim);
        let dirs: Vec<&[f64]> = rays.iter().map(|r| &r[..dim]).collect();
        let defect = homogeneity_defect(&u0, &[0.5, 2.0, 3.0, 10.0], &dirs)?;
        if defect > HOMOGENEITY_TOLERANCE {
            return Err(invalid(alloc::format!(
                "boundary data is not 2-homogeneous (defect {defect:e})"
            )));
        }
        Self::with_boundary(regime, u0, guess)
    }

    /// Arbitrary boundary values, for problems with a known solution.
    pub fn with_boundary<F>(regime: TauRegime, boundary: F, guess: &ScalarField) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let grid = *guess.grid();
        if grid.points_per_axis() < 2 * BOUNDARY_RING + 1 {
            return Err(Error::GridTooSmall {
                points_per_axis: grid.points_per_axis(),
                needed: 2 * BOUNDARY_RING + 1,
            });
        }
        let mut values = guess.values().to_vec();
        for (p, v) in values.iter_mut().enumerate() {
            if grid.ring_distance(p) < BOUNDARY_RING {
                let x = grid.point(p);
                *v = boundary(&x[..grid.dim()]);
            }
        }
        Ok(Self {
            regime,
            guess: ScalarField::from_values(&grid, values)?,
        })
    }

    pub fn regime(&self) -> &TauRegime {
        &self.regime
    }

    pub fn grid(&self) -> &Grid {
        self.guess.grid()
    }

    /// The initial guess with the boundary data written into its outer rings.
    pub fn initial_guess(&self) -> &ScalarField {
        &self.guess
    }

    /// Normalized-flow starting point: the guess at `s = 0`, boundary frozen.
    pub fn flow_state(&self) -> Result<FlowState> {
        FlowState::new(
            self.guess.clone(),
            0.0,
            self.regime,
            1.0,
            BoundaryPolicy::Frozen,
        )
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub field: ScalarField,
    pub iterations: usize,
    /// `sup |r|` over the unknowns.
    pub residual: f64,
    pub converged: bool,
    pub linear_iterations: usize,
}

fn sup_residual(values: &[f64], grid: &Grid, regime: &TauRegime, out: &mut [f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in grid.interior(BOUNDARY_RING) {
        out[p] = residual_at(values, grid, regime, p)?;
        worst = worst.max(out[p].abs());
    }
    Ok(worst)
}

/// `L[δ] = Σ gⁱʲ δ_ij − δ + ½⟨x, Dδ⟩`, the exact derivative of the discrete
/// residual, frozen at one iterate.
struct Linearization {
    grid: Grid,
    unknowns: Vec<usize>,
    metric: Vec<SymMatrix>,
    diag: Vec<f64>,
}

impl Linearization {
    fn new(values: &[f64], grid: &Grid, regime: &TauRegime) -> Result<Self> {
        let unknowns: Vec<usize> = grid.interior(BOUNDARY_RING).collect();
        let inv2 = 1.0 / (grid.spacing() * grid.spacing());
        let mut metric = Vec::with_capacity(unknowns.len());
        let mut diag = Vec::with_capacity(unknowns.len());
        for &p in &unknowns {
            let g = operator_gradient(regime, 1.0, &hessian_at(values, grid, p)).map_err(|_| {
                Error::InadmissibleAt {
                    point: p,
                    lambda: f64::NAN,
                }
            })?;
            diag.push(-2.0 * g.trace() * inv2 - 1.0);
            metric.push(g);
        }
        Ok(Self {
            grid: *grid,
            unknowns,
            metric,
            diag,
        })
    }

    fn apply_at(&self, k: usize, d: &[f64]) -> f64 {
        let grid = &self.grid;
        let p = self.unknowns[k];
        let g = &self.metric[k];
        let h = grid.spacing();
        let inv2 = 1.0 / (h * h);
        let x = grid.point(p);
        let mut acc = -d[p];
        for i in 0..grid.dim() {
            let si = grid.stride(i);
            acc += g.get(i, i) * (d[p + si] - 2.0 * d[p] + d[p - si]) * inv2;
            acc += 0.25 * x[i] * (d[p + si] - d[p - si]) / h;
            for j in (i + 1)..grid.dim() {
                let sj = grid.stride(j);
                let cross = d[p + si + sj] - d[p + si - sj] - d[p - si + sj] + d[p - si - sj];
                acc += 0.5 * g.get(i, j) * cross * inv2;
            }
        }
        acc
    }

    /// Solves `L δ = rhs` by Jacobi iteration; `rhs` and `δ` live on the full
    /// grid with zeros on the boundary rings.
    fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        let n = self.grid.len();
        let mut d = vec![0.0; n];
        let mut next = vec![0.0; n];
        let b_norm = self
            .unknowns
            .iter()
            .map(|&p| rhs[p].abs())
            .fold(0.0, f64::max);
        if b_norm == 0.0 {
            return Ok((d, 0));
        }
        let mut reduction = 1.0;
        for it in 1..=LINEAR_MAX_ITERATIONS {
            let mut worst: f64 = 0.0;
            for (k, &p) in self.unknowns.iter().enumerate() {
                let r = rhs[p] - self.apply_at(k, &d);
                worst = worst.max(r.abs());
                next[p] = d[p] + r / self.diag[k];
            }
            reduction = worst / b_norm;
            if reduction <= LINEAR_REDUCTION {
                return Ok((d, it - 1));
            }
            if !reduction.is_finite() {
                break;
            }
            core::mem::swap(&mut d, &mut next);
        }
        Err(Error::LinearSolveFailed {
            iterations: LINEAR_MAX_ITERATIONS,
            reduction,
        })
    }
}

/// Damped Newton on the discrete expander equation, stopping once
/// `sup |r| ≤ tol`. Running out of iterations is reported through
/// `converged`, not as an error.
pub fn solve_expander_newton(
    problem: &ExpanderProblem,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let grid = *problem.grid();
    let regime = &problem.regime;
    let mut w = problem.guess.values().to_vec();
    let mut r = vec![0.0; grid.len()];
    let mut norm = sup_residual(&w, &grid, regime, &mut r)?;
    let mut linear_iterations = 0;
    let mut trial = w.clone();
    let mut r_trial = vec![0.0; grid.len()];
    for it in 0..max_iter {
        if norm <= tol {
            return Ok(NewtonOutcome {
                field: ScalarField::from_values_unchecked(grid, w),
                iterations: it,
                residual: norm,
                converged: true,
                linear_iterations,
            });
        }
        let lin = Linearization::new(&w, &grid, regime)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let (delta, used) = lin.solve(&rhs)?;
        linear_iterations += used;

        let mut step = 1.0;
        let mut accepted = false;
        let mut last_err = None;
        for _ in 0..MAX_HALVINGS {
            for &p in &lin.unknowns {
                trial[p] = w[p] + step * delta[p];
            }
            match sup_residual(&trial, &grid, regime, &mut r_trial) {
                Ok(n) if n < norm => {
                    core::mem::swap(&mut w, &mut trial);
                    core::mem::swap(&mut r, &mut r_trial);
                    trial.copy_from_slice(&w);
                    norm = n;
                    accepted = true;
                    break;
                }
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
            step *= 0.5;
        }
        if !accepted {
            if let Some(e) = last_err {
                return Err(e);
            }
            return Ok(NewtonOutcome {
                field: ScalarField::from_values_unchecked(grid, w),
                iterations: it + 1,
                residual: norm,
                converged: norm <= tol,
                linear_iterations,
            });
        }
    }
    Ok(NewtonOutcome {
        field: ScalarField::from_values_unchecked(grid, w),
        iterations: max_iter,
        residual: norm,
        converged: norm <= tol,
        linear_iterations,
    })
}
