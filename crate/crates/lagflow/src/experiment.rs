//! Executes a validated [`Config`] and lays out its outputs.
//!
//! Output directory contents:
//!
//! - `config.toml`: the materialized configuration
//! - `metadata.json`: configuration, crate versions, resolved random choices
//! - `summary.json`: kind-specific results, assertion outcomes, any error
//! - `monitors.csv`, `snapshot_NNN.{txt,json}`: flow kinds
//! - `expander_*.{txt,json}`: expander solutions (time `-1`)
//! - `timings.json`: wall-clock phase timings, the only nondeterministic file

use std::f64::consts::{FRAC_PI_4, PI};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use lagflow_core::analysis::{check_condition, decay_exponent_after, fit_power_law_window};
use lagflow_core::expander::{
    aligned_target, convergence_report, expander_residual, normalized_residual, relax_normalized,
    solve_expander_newton, unknowns_residual, ExpanderProblem,
};
use lagflow_core::identities::{
    derivative_check, fbar_concavity, metric_inverse_defect, order_probe_points,
};
use lagflow_core::initial::{AngularProfile, PerturbedQuadratic, Quadratic};
use lagflow_core::operator::regime_of;
use lagflow_core::transform::{
    arctan_shift_identity, cross_flow_consistency, log_gap_rate, ArctanVariant, TransformSpec,
};
use lagflow_core::{
    flow, BoundaryPolicy, EigenTuple, FlowState, Grid, RunConfig, ScalarField, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{self, BoundaryMode, Config, ExpanderMethod, GuessKind, Kind, Preset};
use crate::expr::Expr;
use crate::format::{self, to_json, STATIONARY_TIME};
use crate::{Error, Status};

pub const OUTPUT_ROOT_ENV: &str = "LAGFLOW_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "lagflow-out";

/// Default slack on cone bounds when no `assert.cone_tolerance` is given.
pub const DEFAULT_CONE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug)]
pub struct Report {
    pub kind: Kind,
    pub summary: Map<String, Value>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    /// Values derived from the seed or from cone margins.
    pub resolved: Map<String, Value>,
    pub error: Option<Error>,
    pub timings: Vec<(&'static str, f64)>,
}

impl Report {
    fn new(kind: Kind) -> Self {
        Self {
            kind,
            summary: Map::new(),
            checks: Vec::new(),
            artifacts: Vec::new(),
            resolved: Map::new(),
            error: None,
            timings: Vec::new(),
        }
    }

    pub fn status(&self) -> Status {
        if let Some(e) = &self.error {
            e.status()
        } else if self.checks.iter().all(|c| c.pass) {
            Status::Pass
        } else {
            Status::AssertionFailed
        }
    }

    /// A summary entry as a float, if present and numeric.
    pub fn number(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "kind": self.kind.name(),
            "status": self.status().code(),
            "results": self.summary,
            "assertions": self.checks,
            "error": self.error.as_ref().map(|e| json!({ "status": e.status().code(), "message": e.to_string() })),
        })
    }

    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    fn artifact(&mut self, name: impl Into<String>, contents: String) {
        self.artifacts.push(Artifact {
            name: name.into(),
            contents,
        });
    }

    fn at_most(&mut self, name: &'static str, value: f64, limit: Option<f64>) {
        if let Some(limit) = limit {
            self.checks.push(Check {
                name,
                value,
                limit,
                pass: value <= limit,
            });
        }
    }

    fn at_least(&mut self, name: &'static str, value: f64, limit: Option<f64>) {
        if let Some(limit) = limit {
            self.checks.push(Check {
                name,
                value,
                limit,
                pass: value >= limit,
            });
        }
    }

    fn timed<T>(&mut self, phase: &'static str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.timings.push((phase, start.elapsed().as_secs_f64()));
        out
    }
}

/// Runs the experiment. Errors are recorded in the report rather than
/// returned so partial outputs survive.
pub fn execute(config: &Config) -> Report {
    let mut report = Report::new(config.kind);
    let result = report.timed("execute", |r| match config.kind {
        Kind::Flow => run_flow_kind(config, r),
        Kind::Cone => run_cone_kind(config, r),
        Kind::Decay => run_decay_kind(config, r),
        Kind::Expander => run_expander_kind(config, r),
        Kind::TransformCheck => run_transform_kind(config, r),
        Kind::IdentityCheck => run_identity_kind(config, r),
    });
    if let Err(e) = result {
        report.error = Some(e);
    }
    report
}

#[derive(Debug, Clone)]
enum Datum {
    Quadratic(Quadratic),
    Perturbed(PerturbedQuadratic),
    Angular(AngularProfile),
    Expression(Expr),
}

impl Datum {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Datum::Quadratic(q) => q.eval(x),
            Datum::Perturbed(p) => p.eval(x),
            Datum::Angular(a) => a.eval(x),
            Datum::Expression(e) => e.eval(x, 0.0),
        }
    }
}

type ExactFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

fn resolve_center(config: &Config, report: &mut Report) -> [f64; 3] {
    let mut center = [0.0; 3];
    if config.initial.random_center {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = 0.25 * config.grid.half_width;
        for c in center.iter_mut().take(config.equation.dim) {
            *c = rng.gen_range(-w..=w);
        }
        report
            .resolved
            .insert("center".into(), json!(&center[..config.equation.dim]));
    } else {
        center[..config.equation.dim].copy_from_slice(&config.initial.center);
    }
    center
}

/// Cone used to size perturbations: the condition if there is one, else the
/// admissible cone clipped to `c ± 1`.
fn sizing_cone(config: &Config) -> (f64, f64) {
    let c = config.initial.c;
    config.cone_bounds().unwrap_or_else(|| {
        let lower = config
            .regime()
            .cone_lower()
            .map_or(c - 1.0, |l| l.max(c - 1.0));
        (lower, c + 1.0)
    })
}

fn perturbed(config: &Config, report: &mut Report) -> Result<PerturbedQuadratic, Error> {
    let i = &config.initial;
    let center = resolve_center(config, report);
    let p = match i.epsilon {
        Some(epsilon) => PerturbedQuadratic {
            c: i.c,
            epsilon,
            radius: i.radius,
            center,
        },
        None => {
            let (lo, hi) = sizing_cone(config);
            let p = PerturbedQuadratic::within_cone(i.c, i.radius, lo, hi, i.fraction)?
                .centered_at(center);
            report.resolved.insert("epsilon".into(), json!(p.epsilon));
            p
        }
    };
    Ok(p)
}

fn datum(config: &Config, report: &mut Report) -> Result<Datum, Error> {
    let i = &config.initial;
    Ok(match i.preset {
        Preset::Quadratic => Datum::Quadratic(Quadratic { c: i.c }),
        Preset::PerturbedQuadratic => Datum::Perturbed(perturbed(config, report)?),
        Preset::Angular => {
            let a = match i.delta {
                Some(delta) => AngularProfile {
                    c: i.c,
                    delta,
                    k: i.k,
                },
                None => {
                    let (lo, hi) = sizing_cone(config);
                    let a = AngularProfile::within_cone(i.c, i.k, lo, hi, i.fraction)?;
                    report.resolved.insert("delta".into(), json!(a.delta));
                    a
                }
            };
            Datum::Angular(a)
        }
        Preset::Expression => {
            let src = i.expression.as_deref().expect("validated at parse time");
            Datum::Expression(Expr::parse(src).map_err(|e| config::ConfigError {
                key: "initial.expression".into(),
                message: e.to_string(),
            })?)
        }
    })
}

/// Known exact solution: the boundary expression, or the closed form for
/// quadratic data.
fn exact_solution(config: &Config) -> Result<Option<ExactFn>, Error> {
    if let Some(src) = &config.boundary.expression {
        let e = Expr::parse(src).map_err(|e| config::ConfigError {
            key: "boundary.expression".into(),
            message: e.to_string(),
        })?;
        return Ok(Some(Arc::new(move |x: &[f64], t: f64| e.eval(x, t))));
    }
    if config.initial.preset == Preset::Quadratic {
        let c = config.initial.c;
        let rate = config.regime().blend(
            config.equation.gamma,
            &EigenTuple::splat(config.equation.dim, c)?,
        )?;
        return Ok(Some(Arc::new(move |x: &[f64], t: f64| {
            0.5 * c * x.iter().map(|v| v * v).sum::<f64>() + rate * t
        })));
    }
    Ok(None)
}

fn boundary_policy(config: &Config) -> Result<BoundaryPolicy, Error> {
    Ok(match config.boundary.mode {
        BoundaryMode::Frozen => BoundaryPolicy::Frozen,
        BoundaryMode::QuadraticHold => BoundaryPolicy::QuadraticHold,
        BoundaryMode::Exact => {
            let f = exact_solution(config)?.expect("validated at parse time");
            BoundaryPolicy::exact(move |x, t| f(x, t))
        }
    })
}

fn grid_json(g: &Grid) -> Value {
    json!({ "dim": g.dim(), "m": g.points_per_axis(), "h": g.spacing(), "L": g.half_width() })
}

fn snapshot_artifacts(report: &mut Report, traj: &Trajectory) {
    for (i, s) in traj.snapshots.iter().enumerate() {
        report.artifact(
            format!("snapshot_{i:03}.txt"),
            format::snapshot_text(&s.field, s.time),
        );
        report.artifact(
            format!("snapshot_{i:03}.json"),
            format::snapshot_json(&s.field, s.time),
        );
    }
}

/// Runs the configured flow on a box of half-width `half_width`.
fn simulate(config: &Config, datum: &Datum, half_width: f64) -> Result<Trajectory, Error> {
    let grid = Grid::new(config.equation.dim, half_width, config.grid.spacing)?;
    let field = ScalarField::sample(&grid, |x| datum.eval(x))?;
    let state = FlowState::new(
        field,
        0.0,
        config.regime(),
        config.equation.gamma,
        boundary_policy(config)?,
    )?;
    let mut times = config.time.snapshots.clone();
    if let Some(r) = &config.rescale {
        times.extend_from_slice(&r.times);
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut rc = RunConfig::new(config.time.t_end)
        .snapshots(&times)
        .stride(config.time.monitor_stride);
    rc.safety = config.time.safety;
    if let Some(dt) = config.time.fixed_dt {
        rc = rc.fixed_dt(dt);
    }
    Ok(flow::run(&state, &rc)?)
}

/// Common part of the flow kinds. On a step failure the monitors recorded so
/// far are still written.
fn flow_common(config: &Config, report: &mut Report) -> Result<(Trajectory, Datum), Error> {
    let datum = datum(config, report)?;
    let mut traj = report.timed("flow", |_| simulate(config, &datum, config.grid.half_width))?;
    let (lo, hi) = traj.lam_range();
    report.put("steps", traj.steps);
    report.put("final_time", traj.final_state.time());
    report.put("lam_min", lo);
    report.put("lam_max", hi);
    report.put("grid", grid_json(traj.final_state.grid()));
    report.put("boundary", traj.final_state.boundary().name());
    snapshot_artifacts(report, &traj);
    if let Some(e) = traj.failure.take() {
        report.artifact("monitors.csv", format::monitor_csv(&traj.monitors, None));
        return Err(e.into());
    }
    Ok((traj, datum))
}

fn run_flow_kind(config: &Config, report: &mut Report) -> Result<(), Error> {
    let (traj, datum) = flow_common(config, report)?;
    report.artifact("monitors.csv", format::monitor_csv(&traj.monitors, None));
    let last = traj.final_state.field();
    if let Some(exact) = exact_solution(config)? {
        let t = traj.final_state.time();
        let grid = last.grid();
        let err = (0..grid.len())
            .map(|p| {
                let x = grid.point(p);
                (last.values()[p] - exact(&x[..grid.dim()], t)).abs()
            })
            .fold(0.0, f64::max);
        report.put("max_error_vs_exact", err);
        report.at_most("max_error_vs_exact", err, config.assert.max_error_vs_exact);
    }
    if let Some(spec) = &config.condition {
        if spec.bounds().is_ok() {
            let c = check_condition(spec, last)?;
            report.put(
                "final_condition",
                json!({ "kind": spec.name(), "satisfied": c.satisfied, "lam_min": c.lam_min, "lam_max": c.lam_max, "margin": c.margin }),
            );
        }
    }
    if let Some(r) = &config.rescale {
        let last_t = *r.times.last().expect("validated non-empty");
        let target = aligned_target(traj.final_state.grid(), last_t, r.half_width)?;
        let rep = report.timed("rescale", |_| convergence_report(&traj, &target, &r.times))?;
        let h = config.grid.spacing;
        let d_last = *rep.diffs.last().expect("at least two times");
        let bound = 5.0 * d_last + 10.0 * h * h;
        let ok = rep.strictly_decreasing() && rep.final_residual <= bound;
        report.put(
            "rescaled",
            json!({
                "times": rep.times,
                "diffs": rep.diffs,
                "strictly_decreasing": rep.strictly_decreasing(),
                "final_residual": rep.final_residual,
                "residual_bound": bound,
                "target_grid": grid_json(&target),
            }),
        );
        if config.assert.rescaled_convergence == Some(true) {
            report.checks.push(Check {
                name: "rescaled_convergence",
                value: rep.final_residual,
                limit: bound,
                pass: ok,
            });
        }
    }
    if !config.study_half_widths.is_empty() {
        nested_box_study(config, &datum, last, report)?;
    }
    Ok(())
}

/// Sup-differences between runs on increasing boxes, compared on the
/// smallest one.
fn nested_box_study(
    config: &Config,
    datum: &Datum,
    base: &ScalarField,
    report: &mut Report,
) -> Result<(), Error> {
    let mut widths = config.study_half_widths.clone();
    widths.push(config.grid.half_width);
    widths.sort_by(f64::total_cmp);
    widths.dedup();
    let common = Grid::new(config.equation.dim, widths[0], config.grid.spacing)?;
    let mut finals = Vec::new();
    for &w in &widths {
        let field = if w == config.grid.half_width {
            base.clone()
        } else {
            let mut traj = report.timed("study", |_| simulate(config, datum, w))?;
            if let Some(e) = traj.failure.take() {
                return Err(e.into());
            }
            traj.final_state.field().clone()
        };
        let restricted =
            ScalarField::sample(&common, |x| field.interpolate(x).unwrap_or(f64::NAN))?;
        finals.push(restricted);
    }
    let diffs = finals
        .windows(2)
        .map(|w| w[1].sup_distance(&w[0]))
        .collect::<Result<Vec<_>, _>>()?;
    report.put("nested_box", json!({ "half_widths": widths, "sup_differences": diffs, "common_grid": grid_json(&common) }));
    Ok(())
}

fn run_cone_kind(config: &Config, report: &mut Report) -> Result<(), Error> {
    let spec = config.condition.expect("validated at parse time");
    let (lo, hi) = spec.bounds()?;
    let tol = config
        .assert
        .cone_tolerance
        .unwrap_or(DEFAULT_CONE_TOLERANCE);
    let (traj, _) = flow_common(config, report)?;
    report.artifact("monitors.csv", format::monitor_csv(&traj.monitors, None));
    let inside = |m: &flow::Monitor| m.lam_min >= lo - tol && m.lam_max <= hi + tol;
    let first_violation = traj.monitors.iter().find(|m| !inside(m)).map(|m| m.t);
    let excess = traj
        .monitors
        .iter()
        .map(|m| (lo - m.lam_min).max(m.lam_max - hi))
        .fold(f64::NEG_INFINITY, f64::max);
    let per_snapshot = traj
        .snapshots
        .iter()
        .map(|s| {
            check_condition(&spec, &s.field)
                .map(|c| json!({ "t": s.time, "satisfied": c.satisfied, "lam_min": c.lam_min, "lam_max": c.lam_max, "margin": c.margin }))
        })
        .collect::<Result<Vec<_>, _>>()?;
    report.put("condition", spec.name());
    report.put("bounds", json!([lo, hi]));
    report.put("tolerance", tol);
    report.put("satisfied", first_violation.is_none());
    report.put("monitored_times", traj.monitors.len());
    report.put("first_violation", first_violation);
    report.put("max_excess", excess);
    report.put("snapshots", per_snapshot);
    if config.assert.cone_tolerance.is_some() {
        report.checks.push(Check {
            name: "cone_tolerance",
            value: excess,
            limit: tol,
            pass: first_violation.is_none(),
        });
    }
    Ok(())
}

fn run_decay_kind(config: &Config, report: &mut Report) -> Result<(), Error> {
    let (traj, _) = flow_common(config, report)?;
    let series: Vec<(f64, f64)> = traj
        .monitors
        .iter()
        .filter(|m| m.t > 0.0)
        .map(|m| (m.t, m.d3_sup))
        .collect();
    let fit = match (config.decay.t_min, config.decay.t_max) {
        (None, None) => decay_exponent_after(&series, config.decay.transient_fraction),
        (lo, hi) => fit_power_law_window(&series, lo.unwrap_or(0.0), hi.unwrap_or(f64::INFINITY)),
    };
    let fit = match fit {
        Ok(f) => f,
        Err(e) => {
            report.artifact("monitors.csv", format::monitor_csv(&traj.monitors, None));
            return Err(e.into());
        }
    };
    let footer = format::decay_footer("d3_sup", &fit);
    report.artifact(
        "monitors.csv",
        format::monitor_csv(&traj.monitors, Some(&footer)),
    );
    report.put("series", "d3_sup");
    report.put("alpha", fit.alpha);
    report.put("squared_alpha", 2.0 * fit.alpha);
    report.put("c", fit.c);
    report.put("fit_residual", fit.residual);
    report.put("fit_samples", fit.samples);
    report.put("window", json!([config.decay.t_min, config.decay.t_max]));
    report.at_least("alpha_min", fit.alpha, config.assert.alpha_min);
    report.at_most("alpha_max", fit.alpha, config.assert.alpha_max);
    Ok(())
}

fn run_expander_kind(config: &Config, report: &mut Report) -> Result<(), Error> {
    let regime = config.regime();
    let grid = Grid::new(
        config.equation.dim,
        config.grid.half_width,
        config.grid.spacing,
    )?;
    let datum = datum(config, report)?;
    let e = &config.expander;
    let guess = match e.guess {
        GuessKind::Datum => ScalarField::sample(&grid, |x| e.guess_scale * datum.eval(x))?,
        GuessKind::PerturbedQuadratic => {
            let p = perturbed(config, report)?;
            ScalarField::sample(&grid, |x| e.guess_scale * p.eval(x))?
        }
    };
    let problem = ExpanderProblem::homogeneous(regime, |x: &[f64]| datum.eval(x), &guess)?;
    report.put("grid", grid_json(&grid));

    if config.initial.preset == Preset::Quadratic {
        let c = config.initial.c;
        let f = regime.eval(&EigenTuple::splat(config.equation.dim, c)?)?;
        let exact = ScalarField::sample(&grid, |x| {
            0.5 * c * x.iter().map(|v| v * v).sum::<f64>() + f
        })?;
        report.put(
            "quadratic_expander_residual",
            expander_residual(&exact, &regime)?.sup_abs(),
        );
    }

    let mut newton_field = None;
    if e.method.newton() {
        let out = report.timed("newton", |_| {
            solve_expander_newton(&problem, e.tol, e.max_iter)
        })?;
        report.put(
            "newton",
            json!({
                "iterations": out.iterations,
                "residual": out.residual,
                "converged": out.converged,
                "linear_iterations": out.linear_iterations,
            }),
        );
        report.at_most("max_residual", out.residual, config.assert.max_residual);
        report.at_most(
            "max_iterations",
            out.iterations as f64,
            config.assert.max_iterations.map(|v| v as f64),
        );
        report.artifact(
            "expander_newton.txt",
            format::snapshot_text(&out.field, STATIONARY_TIME),
        );
        report.artifact(
            "expander_newton.json",
            format::snapshot_json(&out.field, STATIONARY_TIME),
        );
        newton_field = Some(out.field);
    }
    if e.method.normalized() {
        let state = problem.flow_state()?;
        let out = report.timed("normalized", |_| {
            relax_normalized(&state, e.flow_tol, e.s_max, config.time.safety)
        })?;
        report.put(
            "normalized",
            json!({
                "increment": out.increment,
                "settled": out.settled,
                "steps": out.steps,
                "s": out.state.time(),
                "residual": normalized_residual(out.state.field(), &regime)?,
                "centered_residual": unknowns_residual(out.state.field(), &regime)?,
            }),
        );
        report.at_most("max_increment", out.increment, config.assert.max_increment);
        report.artifact(
            "expander_normalized.txt",
            format::snapshot_text(out.state.field(), STATIONARY_TIME),
        );
        report.artifact(
            "expander_normalized.json",
            format::snapshot_json(out.state.field(), STATIONARY_TIME),
        );
        if let (Some(n), ExpanderMethod::Both) = (&newton_field, e.method) {
            let gap = out.state.field().sup_distance(n)?;
            let h = config.grid.spacing;
            report.put("disagreement", gap);
            report.put("disagreement_bound", 10.0 * (h * h).max(1e-9));
            report.at_most("max_disagreement", gap, config.assert.max_disagreement);
        }
    }
    Ok(())
}

fn run_transform_kind(config: &Config, report: &mut Report) -> Result<(), Error> {
    let datum = datum(config, report)?;
    let tau = config.equation.tau;
    let dim = config.equation.dim;
    let grid = Grid::new(dim, config.grid.half_width, config.grid.spacing)?;
    let u0 = ScalarField::sample(&grid, |x| datum.eval(x))?;
    let rep = report.timed("consistency", |_| {
        cross_flow_consistency(tau, &u0, config.time.t_end, config.transform_samples)
    })?;
    let spec = TransformSpec::new(tau, dim, ArctanVariant::TimeLinear)?;
    let quadratic = config.initial.preset == Preset::Quadratic;
    let log_case = tau < FRAC_PI_4;
    let mut worst_gap: f64 = 0.0;
    let mut worst_prediction: Option<f64> = None;
    let mut variants = Vec::new();
    for v in &rep.variants {
        let predicted: Option<Vec<f64>> = if log_case {
            quadratic.then(|| {
                let rate = log_gap_rate(spec.map_eigenvalue(config.initial.c), dim).abs();
                rep.times.iter().map(|t| rate * t).collect()
            })
        } else if v.variant == ArctanVariant::LiteralConstant.name() {
            Some(
                rep.times
                    .iter()
                    .map(|t| dim as f64 * PI / 4.0 * t)
                    .collect(),
            )
        } else {
            Some(vec![0.0; rep.times.len()])
        };
        let prediction_error = predicted.as_ref().map(|p| {
            p.iter()
                .zip(&v.gaps)
                .map(|(p, g)| (p - g).abs())
                .fold(0.0, f64::max)
        });
        if let Some(e) = prediction_error {
            worst_prediction = Some(worst_prediction.unwrap_or(0.0).max(e));
        }
        let max_gap = v.gaps.iter().copied().fold(0.0, f64::max);
        if v.variant == ArctanVariant::TimeLinear.name() {
            worst_gap = max_gap;
        }
        variants.push(json!({
            "variant": v.variant,
            "time_linear": v.time_linear,
            "constant": v.constant,
            "gaps": v.gaps,
            "max_gap": max_gap,
            "predicted": predicted,
            "prediction_error": prediction_error,
        }));
    }
    let body = json!({
        "source_tau": rep.source_tau,
        "target_branch": rep.target_branch.name(),
        "case": if log_case { "log" } else { "arctan" },
        "nu": quadratic.then(|| spec.map_eigenvalue(config.initial.c)),
        "times": rep.times,
        "source_grid": grid_json(&grid),
        "target_grid": grid_json(&rep.target_grid),
        "variants": variants,
    });
    report.artifact("consistency.json", to_json(&body));
    report.put("consistency", body);
    report.put("max_gap", worst_gap);
    report.put("max_prediction_error", worst_prediction);
    report.at_most("max_gap", worst_gap, config.assert.max_gap);
    if let Some(limit) = config.assert.max_prediction_error {
        let value = worst_prediction.unwrap_or(f64::INFINITY);
        report.checks.push(Check {
            name: "max_prediction_error",
            value,
            limit,
            pass: value <= limit,
        });
    }
    Ok(())
}

/// Points where the derivative order is measured: each branch at its
/// probe eigenvalues.
fn order_points() -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for tau in [0.0, PI / 6.0, FRAC_PI_4, PI / 3.0, PI / 2.0] {
        let r = regime_of(tau).expect("tau in range");
        pts.extend(order_probe_points(&r).map(|l| (tau, l)));
    }
    pts
}

fn run_identity_kind(config: &Config, report: &mut Report) -> Result<(), Error> {
    let n = config.identity_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut metric: f64 = 0.0;
    for _ in 0..n {
        let tau = rng.gen_range(0.0..=PI / 2.0);
        let r = regime_of(tau)?;
        let lambda = match r.cone_lower() {
            Some(lo) => lo + 10f64.powf(rng.gen_range(-3.0..1.0)),
            None => rng.gen_range(-10.0..10.0),
        };
        metric = metric.max(metric_inverse_defect(&r, lambda)?);
    }

    let mut shift: f64 = 0.0;
    for _ in 0..n {
        let tau = rng.gen_range(FRAC_PI_4 + 1e-6..PI / 2.0 - 1e-6);
        let r = regime_of(tau)?;
        let lambda = -r.a() - r.b() + 10f64.powf(rng.gen_range(-3.0..2.0));
        shift = shift.max(arctan_shift_identity(lambda, &r)?.2.abs());
    }

    let mut points = Vec::new();
    let mut min_order = f64::INFINITY;
    for (tau, lambda) in order_points() {
        let c = derivative_check(&regime_of(tau)?, lambda)?;
        min_order = min_order.min(c.order);
        points.push(json!({
            "tau": tau,
            "lambda": lambda,
            "error_coarse": c.error_coarse,
            "error_fine": c.error_fine,
            "rounding_floor": c.rounding_floor,
            "resolvable": c.resolvable(),
            "order": c.order,
        }));
    }

    let mut concavity: f64 = 0.0;
    let mut off: f64 = 0.0;
    let mut negative = true;
    for _ in 0..n.min(1000) {
        let p: Vec<f64> = (0..3)
            .map(|_| 10f64.powf(rng.gen_range(-1.0..0.7)))
            .collect();
        let c = fbar_concavity(&p)?;
        concavity = concavity.max(c.max_relative_error);
        off = off.max(c.max_off_diagonal);
        negative &= c.all_negative;
    }

    report.put("samples", n);
    report.put("max_metric_defect", metric);
    report.put("max_shift_gap", shift);
    report.put("min_order", min_order);
    report.put("order_points", points);
    report.put("max_concavity_error", concavity);
    report.put("max_concavity_off_diagonal", off);
    report.put("concavity_all_negative", negative);
    report.at_most("max_metric_defect", metric, config.assert.max_metric_defect);
    report.at_most("max_shift_gap", shift, config.assert.max_shift_gap);
    report.at_least("min_order", min_order, config.assert.min_order);
    if let Some(limit) = config.assert.max_concavity_error {
        report.checks.push(Check {
            name: "max_concavity_error",
            value: concavity,
            limit,
            pass: negative && concavity <= limit,
        });
    }
    Ok(())
}

pub fn metadata(config: &Config, report: &Report) -> Value {
    let mut files: Vec<&str> = report.artifacts.iter().map(|a| a.name.as_str()).collect();
    files.extend([
        "config.toml",
        "metadata.json",
        "summary.json",
        "timings.json",
    ]);
    files.sort_unstable();
    json!({
        "config": serde_json::to_value(config::to_table(config)).expect("TOML values map to JSON"),
        "versions": { "lagflow": env!("CARGO_PKG_VERSION"), "lagflow-core": lagflow_core::VERSION },
        "resolved": report.resolved,
        "files": files,
    })
}

/// Writes every output into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, config: &Config, report: &Report) -> Result<(), Error> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = vec![
        ("config.toml".to_string(), config::emit(config)),
        (
            "metadata.json".to_string(),
            to_json(&metadata(config, report)),
        ),
        ("summary.json".to_string(), to_json(&report.summary_json())),
    ];
    let timings: Map<String, Value> = report
        .timings
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    files.push(("timings.json".to_string(), to_json(&timings)));
    files.extend(
        report
            .artifacts
            .iter()
            .map(|a| (a.name.clone(), a.contents.clone())),
    );
    for (name, contents) in files {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(io(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Config {
        config::parse(text).unwrap()
    }

    #[test]
    fn quadratic_flow_matches_closed_form() {
        let c = cfg("kind = \"flow\"\n[equation]\ntau = \"pi/3\"\n[grid]\nhalf_width = 0.5\nspacing = 0.1\n\
                     [time]\nt_end = 0.05\n[boundary]\nmode = \"exact\"\n[initial]\nc = 0.7\n\
                     [assert]\nmax_error_vs_exact = 1e-8\n");
        let r = execute(&c);
        assert!(r.error.is_none(), "{:?}", r.error);
        assert_eq!(r.status(), Status::Pass);
        assert!(r.number("max_error_vs_exact").unwrap() <= 1e-8);
        assert!(r.artifacts.iter().any(|a| a.name == "monitors.csv"));
    }

    #[test]
    fn failing_assertion_sets_status_one() {
        let c = cfg("kind = \"flow\"\n[equation]\ntau = 0.5\n[grid]\nhalf_width = 0.5\nspacing = 0.1\n\
                     [time]\nt_end = 0.01\n[boundary]\nmode = \"exact\"\n[assert]\nmax_error_vs_exact = -1.0\n");
        let r = execute(&c);
        assert_eq!(r.status(), Status::AssertionFailed);
        assert!(!r.checks[0].pass);
    }

    #[test]
    fn inadmissible_data_is_a_runtime_error() {
        let c = cfg("kind = \"flow\"\n[equation]\ntau = 0\n[grid]\nhalf_width = 0.5\nspacing = 0.1\n\
                     [time]\nt_end = 0.01\n[initial]\npreset = \"expression\"\nexpression = \"-x^2\"\n");
        let r = execute(&c);
        assert_eq!(r.status(), Status::RuntimeError);
        assert!(r.summary_json()["error"]["message"].is_string());
    }

    #[test]
    fn identity_check_meets_its_bounds() {
        let c = cfg("kind = \"identity-check\"\n[equation]\ntau = 0\n[identity]\nsamples = 2000\n\
                     [assert]\nmax_shift_gap = 1e-12\nmax_metric_defect = 1e-10\nmin_order = 1.9\nmax_concavity_error = 1e-6\n");
        let r = execute(&c);
        assert_eq!(r.status(), Status::Pass, "{:#?}", r.checks);
    }

    #[test]
    fn random_center_follows_the_seed() {
        let text = "kind = \"flow\"\nseed = 11\n[equation]\ntau = \"pi/4\"\n[grid]\nhalf_width = 0.5\nspacing = 0.1\n\
                    [time]\nt_end = 0.0\n[initial]\npreset = \"perturbed-quadratic\"\nc = 0.2\nrandom_center = true\n\
                    [condition]\nkind = \"B\"\nzeta = 0.3\nrho = 1\n";
        let a = execute(&cfg(text));
        let b = execute(&cfg(text));
        let other = execute(&cfg(&text.replace("seed = 11", "seed = 12")));
        assert_eq!(a.resolved["center"], b.resolved["center"]);
        assert_ne!(a.resolved["center"], other.resolved["center"]);
    }

    #[test]
    fn expander_kind_reports_both_methods() {
        let c = cfg("kind = \"expander\"\n[equation]\ntau = \"pi/4\"\n[grid]\nhalf_width = 1\nspacing = 0.2\n\
                     [initial]\nc = 0.5\n[expander]\nflow_tol = 1e-6\n");
        let r = execute(&c);
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!(r.summary["newton"]["converged"].as_bool().unwrap());
        assert!(r.number("quadratic_expander_residual").unwrap() <= 1e-12);
        assert!(r.number("disagreement").unwrap() <= r.number("disagreement_bound").unwrap());
    }
}
