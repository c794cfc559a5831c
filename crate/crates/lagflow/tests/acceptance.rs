//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Experiments come from `configs/` at the
//! workspace root, so `lagflow run` reproduces each of them.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use lagflow::config::parse_with_overrides;
use lagflow::experiment::{execute, Report, OUTPUT_ROOT_ENV};
use lagflow::Status;
use lagflow_core::expander::dilate;
use lagflow_core::flow::run;
use lagflow_core::initial::PerturbedQuadratic;
use lagflow_core::operator::regime_of;
use lagflow_core::{BoundaryPolicy, FlowState, Grid, RunConfig, ScalarField};
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn experiment(name: &str, overrides: &[&str]) -> Report {
    let text = std::fs::read_to_string(configs().join(name)).expect("config file");
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let config = parse_with_overrides(&text, &overrides).unwrap_or_else(|e| panic!("{name}: {e}"));
    execute(&config)
}

fn get<'a>(report: &'a Report, path: &[&str]) -> &'a Value {
    let mut v = report.summary.get(path[0]).unwrap_or(&Value::Null);
    for key in &path[1..] {
        v = v.get(key).unwrap_or(&Value::Null);
    }
    v
}

fn num(report: &Report, path: &[&str]) -> f64 {
    get(report, path).as_f64().unwrap_or(f64::NAN)
}

/// A failed run is reported with its error instead of panicking.
fn errored(report: &Report) -> Option<String> {
    report.error.as_ref().map(|e| format!("error: {e}"))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn c1_exact_quadratic_flow() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, tau) in [
        ("0", "0"),
        ("pi/6", "pi/6"),
        ("pi/4", "pi/4"),
        ("pi/3", "pi/3"),
        ("pi/2", "pi/2"),
    ] {
        let start = Instant::now();
        let r = experiment("quadratic-flow.toml", &[&format!("equation.tau=\"{tau}\"")]);
        let elapsed = start.elapsed();
        if let Some(e) = errored(&r) {
            return Outcome {
                pass: false,
                detail: format!("tau={label}: {e}"),
            };
        }
        let err = num(&r, &["max_error_vs_exact"]);
        let ok = err <= 1e-8 && elapsed <= Duration::from_secs(30);
        pass &= ok;
        parts.push(format!(
            "tau={label} err={err:.1e} in {:.1}s",
            elapsed.as_secs_f64()
        ));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn c2_cone_preservation() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, file) in [
        ("B", "cone-b.toml"),
        ("E", "cone-e.toml"),
        ("L", "cone-l.toml"),
    ] {
        let r = experiment(file, &[]);
        if let Some(e) = errored(&r) {
            return Outcome {
                pass: false,
                detail: format!("{label}: {e}"),
            };
        }
        let bounds = get(&r, &["bounds"]);
        let (lo, hi) = (
            bounds[0].as_f64().unwrap_or(f64::NAN),
            bounds[1].as_f64().unwrap_or(f64::NAN),
        );
        let (lam_min, lam_max) = (num(&r, &["lam_min"]), num(&r, &["lam_max"]));
        let inside = lam_min >= lo - 1e-6 && lam_max <= hi + 1e-6;
        let ok = inside && get(&r, &["satisfied"]) == &Value::Bool(true);
        pass &= ok;
        parts.push(format!(
            "{label} [{lam_min:.4}, {lam_max:.4}] within [{lo:.4}, {hi:.4}]±1e-6"
        ));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn c3_decay_exponent() -> Outcome {
    let start = Instant::now();
    let r = experiment("decay.toml", &[]);
    let elapsed = start.elapsed();
    if let Some(e) = errored(&r) {
        return Outcome {
            pass: false,
            detail: e,
        };
    }
    let alpha = num(&r, &["alpha"]);
    Outcome {
        pass: (0.7..=1.3).contains(&alpha) && elapsed <= Duration::from_secs(300),
        detail: format!(
            "alpha={alpha:.4} in [0.7, 1.3], {:.1}s",
            elapsed.as_secs_f64()
        ),
    }
}

fn c4_operator_identities() -> Outcome {
    let r = experiment("identities.toml", &[]);
    if let Some(e) = errored(&r) {
        return Outcome {
            pass: false,
            detail: e,
        };
    }
    let n = num(&r, &["samples"]);
    let order = num(&r, &["min_order"]);
    let metric = num(&r, &["max_metric_defect"]);
    let shift = num(&r, &["max_shift_gap"]);
    let concavity = num(&r, &["max_concavity_error"]);
    let negative = get(&r, &["concavity_all_negative"]) == &Value::Bool(true);
    Outcome {
        pass: n >= 1e4 && order >= 1.9 && metric <= 1e-10 && shift <= 1e-12 && negative && concavity <= 1e-6,
        detail: format!(
            "order={order:.3}, metric={metric:.1e}, shift={shift:.1e} on {n} samples, concavity={concavity:.1e} (negative: {negative})"
        ),
    }
}

fn c5_self_expander() -> Outcome {
    let r = experiment("expander.toml", &[]);
    if let Some(e) = errored(&r) {
        return Outcome {
            pass: false,
            detail: e,
        };
    }
    let h = num(&r, &["grid", "h"]);
    let residual = num(&r, &["newton", "residual"]);
    let iterations = num(&r, &["newton", "iterations"]);
    let increment = num(&r, &["normalized", "increment"]);
    let gap = num(&r, &["disagreement"]);
    let quadratic = num(&r, &["quadratic_expander_residual"]);
    let bound = 10.0 * (h * h).max(1e-9);
    Outcome {
        pass: residual <= 1e-9 && iterations <= 15.0 && increment <= 1e-6 && gap <= bound && quadratic <= 1e-12,
        detail: format!(
            "newton {residual:.1e} in {iterations} its, increment={increment:.1e}, gap={gap:.1e} (bound {bound:.1e}), quadratic={quadratic:.1e}"
        ),
    }
}

fn c6_rescaled_convergence() -> Outcome {
    let r = experiment("rescaled.toml", &[]);
    if let Some(e) = errored(&r) {
        return Outcome {
            pass: false,
            detail: e,
        };
    }
    let diffs: Vec<f64> = get(&r, &["rescaled", "diffs"])
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    let decreasing = diffs.len() == 3 && diffs.windows(2).all(|w| w[1] < w[0]);
    let residual = num(&r, &["rescaled", "final_residual"]);
    let bound = num(&r, &["rescaled", "residual_bound"]);
    let d: Vec<String> = diffs.iter().map(|d| format!("{d:.2e}")).collect();
    Outcome {
        pass: decreasing && residual <= bound,
        detail: format!(
            "d=[{}], residual={residual:.1e} (bound {bound:.1e})",
            d.join(", ")
        ),
    }
}

fn variant<'a>(r: &'a Report, name: &str) -> &'a Value {
    get(r, &["consistency", "variants"])
        .as_array()
        .and_then(|vs| vs.iter().find(|v| v["variant"] == name))
        .unwrap_or(&Value::Null)
}

fn c7_transform_harness() -> Outcome {
    let arctan = experiment("transform-arctan.toml", &[]);
    let log = experiment("transform-log.toml", &[]);
    if let Some(e) = errored(&arctan).or_else(|| errored(&log)) {
        return Outcome {
            pass: false,
            detail: e,
        };
    }
    let corrected = variant(&arctan, "time-linear")["max_gap"]
        .as_f64()
        .unwrap_or(f64::NAN);
    let literal = variant(&arctan, "literal-constant")["prediction_error"]
        .as_f64()
        .unwrap_or(f64::NAN);
    let log_error = num(&log, &["max_prediction_error"]);
    let log_gap = num(&log, &["max_gap"]);
    Outcome {
        pass: corrected <= 1e-6 && literal <= 1e-8 && log_error <= 1e-8,
        detail: format!(
            "arctan gap={corrected:.1e}, literal vs n*pi/4*t={literal:.1e}, log gap={log_gap:.3e} vs closed form {log_error:.1e}"
        ),
    }
}

fn c8_scaling_equivariance() -> Outcome {
    // u_R(x, t) = R⁻² u(Rx, R²t) against a direct run from u_R(·, 0)
    let r = 2.0;
    let h = 0.05;
    let regime = regime_of(std::f64::consts::PI / 6.0).expect("tau in range");
    let c = 1.5;
    let lower = regime.cone_lower().expect("log branch has a cone");
    let bump = PerturbedQuadratic::within_cone(c, 0.8, lower, c + 1.0, 0.5).expect("bump fits");
    let t_end = 0.1;

    let big = Grid::new(2, 2.0, h).expect("grid");
    let small = Grid::new(2, 1.0, h).expect("grid");
    let outcome = (|| -> lagflow_core::Result<f64> {
        let s = FlowState::new(
            ScalarField::sample(&big, |x| bump.eval(x))?,
            0.0,
            regime,
            1.0,
            BoundaryPolicy::QuadraticHold,
        )?;
        let long = run(&s, &RunConfig::new(r * r * t_end))?;
        if let Some(e) = long.failure {
            return Err(e);
        }
        let start = dilate(s.field(), r, &small)?;
        let s2 = FlowState::new(start, 0.0, regime, 1.0, BoundaryPolicy::QuadraticHold)?;
        let short = run(&s2, &RunConfig::new(t_end))?;
        if let Some(e) = short.failure {
            return Err(e);
        }
        dilate(long.final_state.field(), r, &small)?.sup_distance(short.final_state.field())
    })();
    match outcome {
        Ok(gap) => Outcome {
            pass: gap <= 10.0 * h * h,
            detail: format!("R=2 sup gap={gap:.2e} (bound {:.1e})", 10.0 * h * h),
        },
        Err(e) => Outcome {
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("output directory")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.file_name().is_some_and(|n| n != "timings.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).expect("output file"),
            )
        })
        .collect();
    files.sort();
    files
}

fn c9_determinism() -> Outcome {
    let roots = [
        tempfile::tempdir().expect("tempdir"),
        tempfile::tempdir().expect("tempdir"),
    ];
    let cases: [(&str, &[&str]); 3] = [
        ("identities.toml", &["identity.samples=500"]),
        (
            "cone-b.toml",
            &[
                "initial.random_center=true",
                "seed=11",
                "grid.half_width=1.0",
                "time.t_end=0.1",
            ],
        ),
        ("expander.toml", &[]),
    ];
    let mut compared = 0;
    for (file, overrides) in cases {
        let mut trees = Vec::new();
        for root in &roots {
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_lagflow"));
            cmd.env(OUTPUT_ROOT_ENV, root.path())
                .arg("run")
                .arg(configs().join(file));
            for o in overrides {
                cmd.arg("--override").arg(o);
            }
            let out = cmd.output().expect("run lagflow");
            if out.status.code() != Some(Status::Pass.code() as i32) {
                return Outcome {
                    pass: false,
                    detail: format!("{file}: exit {:?}", out.status.code()),
                };
            }
            let name = std::str::from_utf8(&out.stdout)
                .ok()
                .and_then(|s| s.lines().last())
                .and_then(|l| l.rsplit(" -> ").next())
                .map(PathBuf::from)
                .expect("output directory line");
            trees.push(read_tree(&name));
        }
        if trees[0] != trees[1] {
            return Outcome {
                pass: false,
                detail: format!("{file}: outputs differ"),
            };
        }
        compared += trees[0].len();
    }
    Outcome {
        pass: true,
        detail: format!("{compared} files byte-identical across two runs"),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("exact quadratic flow", c1_exact_quadratic_flow),
        ("cone preservation", c2_cone_preservation),
        ("decay exponent", c3_decay_exponent),
        ("operator identities", c4_operator_identities),
        ("self-expander", c5_self_expander),
        ("rescaled convergence", c6_rescaled_convergence),
        ("transformation harness", c7_transform_harness),
        ("scaling equivariance", c8_scaling_equivariance),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of 9 criteria failed");
        ExitCode::FAILURE
    }
}
