use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lagflow::experiment::{self, DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV};
use lagflow::{config, Error, Kind, Status};

/// Special Lagrangian parabolic flow experiments.
///
/// Outputs go to `$LAGFLOW_OUTPUT_ROOT/<output>` (default root `lagflow-out`).
/// Exit status: 0 pass, 1 assertion failed, 2 configuration error,
/// 3 runtime or admissibility error.
#[derive(Parser)]
#[command(name = "lagflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    config: PathBuf,

    /// Replace a configuration value, e.g. `--override time.t_end=0.5`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment the file describes.
    Run(RunArgs),
    /// Validate a configuration and print it with defaults filled in.
    Check(RunArgs),
    /// Run with `kind = "flow"`.
    Flow(RunArgs),
    /// Run with `kind = "expander"`.
    Expander(RunArgs),
    /// Run with `kind = "decay"`.
    Decay(RunArgs),
    /// Run with `kind = "cone"`.
    Cone(RunArgs),
    /// Run with `kind = "transform-check"`.
    TransformCheck(RunArgs),
    /// Run with `kind = "identity-check"`.
    IdentityCheck(RunArgs),
}

fn load(args: &RunArgs, kind: Option<Kind>) -> Result<config::Config, Error> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| Error::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut overrides = Vec::new();
    if let Some(k) = kind {
        overrides.push(format!("kind=\"{}\"", k.name()));
    }
    overrides.extend(args.overrides.iter().cloned());
    Ok(config::parse_with_overrides(&text, &overrides)?)
}

fn run(args: &RunArgs, kind: Option<Kind>) -> Status {
    let config = match load(args, kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                Error::Io { .. } => Status::ConfigError,
                other => other.status(),
            };
        }
    };
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from);
    let dir = root.join(&config.output);
    let report = experiment::execute(&config);
    if let Err(e) = experiment::write_outputs(&dir, &config, &report) {
        eprintln!("error: {e}");
        return Status::RuntimeError;
    }
    print_report(&dir, &report);
    report.status()
}

fn print_report(dir: &Path, report: &experiment::Report) {
    for c in &report.checks {
        let verdict = if c.pass { "pass" } else { "FAIL" };
        println!("{verdict} {}: {:e} (limit {:e})", c.name, c.value, c.limit);
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    println!("{} -> {}", report.kind.name(), dir.display());
}

fn check(args: &RunArgs) -> Status {
    match load(args, None) {
        Ok(c) => {
            print!("{}", config::emit(&c));
            Status::Pass
        }
        Err(e) => {
            eprintln!("error: {e}");
            Status::ConfigError
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match &cli.command {
        Command::Run(a) => run(a, None),
        Command::Check(a) => check(a),
        Command::Flow(a) => run(a, Some(Kind::Flow)),
        Command::Expander(a) => run(a, Some(Kind::Expander)),
        Command::Decay(a) => run(a, Some(Kind::Decay)),
        Command::Cone(a) => run(a, Some(Kind::Cone)),
        Command::TransformCheck(a) => run(a, Some(Kind::TransformCheck)),
        Command::IdentityCheck(a) => run(a, Some(Kind::IdentityCheck)),
    };
    ExitCode::from(status.code())
}
