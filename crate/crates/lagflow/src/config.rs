//! Experiment configuration: a TOML document with fixed sections.
//!
//! ```toml
//! kind = "flow"            # flow | expander | decay | cone | transform-check | identity-check
//! seed = 0
//!
//! [equation]
//! tau = "pi/4"             # number or constant expression
//! dim = 2
//!
//! [grid]
//! half_width = 1.0
//! spacing = 0.05
//!
//! [time]
//! t_end = 0.5
//! ```
//!
//! Every error names the offending key on a single line. [`emit`] writes the
//! fully materialized configuration back out, and parsing that text yields
//! the same [`Config`].

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_4;
use std::fmt;

use lagflow_core::analysis::ConditionSpec;
use lagflow_core::operator::{TauRegime, TAU_TOLERANCE};
use toml::{Table, Value};

use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Flow,
    Expander,
    Decay,
    Cone,
    TransformCheck,
    IdentityCheck,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Flow,
        Kind::Expander,
        Kind::Decay,
        Kind::Cone,
        Kind::TransformCheck,
        Kind::IdentityCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Flow => "flow",
            Kind::Expander => "expander",
            Kind::Decay => "decay",
            Kind::Cone => "cone",
            Kind::TransformCheck => "transform-check",
            Kind::IdentityCheck => "identity-check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Kinds that run a time-dependent flow.
    pub fn is_flow(self) -> bool {
        matches!(
            self,
            Kind::Flow | Kind::Decay | Kind::Cone | Kind::TransformCheck
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    Frozen,
    Exact,
    QuadraticHold,
}

impl BoundaryMode {
    fn name(self) -> &'static str {
        match self {
            BoundaryMode::Frozen => "frozen",
            BoundaryMode::Exact => "exact",
            BoundaryMode::QuadraticHold => "quadratic-hold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Quadratic,
    PerturbedQuadratic,
    Angular,
    Expression,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Quadratic => "quadratic",
            Preset::PerturbedQuadratic => "perturbed-quadratic",
            Preset::Angular => "angular",
            Preset::Expression => "expression",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpanderMethod {
    Newton,
    Normalized,
    Both,
}

impl ExpanderMethod {
    pub fn newton(self) -> bool {
        self != ExpanderMethod::Normalized
    }

    pub fn normalized(self) -> bool {
        self != ExpanderMethod::Newton
    }

    fn name(self) -> &'static str {
        match self {
            ExpanderMethod::Newton => "newton",
            ExpanderMethod::Normalized => "normalized",
            ExpanderMethod::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessKind {
    PerturbedQuadratic,
    Datum,
}

impl GuessKind {
    fn name(self) -> &'static str {
        match self {
            GuessKind::PerturbedQuadratic => "perturbed-quadratic",
            GuessKind::Datum => "datum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equation {
    pub tau: f64,
    pub dim: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub half_width: f64,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub safety: f64,
    pub monitor_stride: usize,
    pub fixed_dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConfig {
    pub mode: BoundaryMode,
    /// Exact solution `u(x, t)` for the `exact` mode.
    pub expression: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub preset: Preset,
    pub c: f64,
    /// Share of the cone margin the perturbation may use.
    pub fraction: f64,
    pub radius: f64,
    pub k: u32,
    pub center: Vec<f64>,
    pub random_center: bool,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub expression: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConfig {
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub transient_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpanderConfig {
    pub method: ExpanderMethod,
    pub tol: f64,
    pub max_iter: usize,
    pub guess: GuessKind,
    pub guess_scale: f64,
    pub s_max: f64,
    pub flow_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescaleConfig {
    pub times: Vec<f64>,
    pub half_width: f64,
}

/// Declared pass/fail thresholds. Only the ones present are checked.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assertions {
    pub max_error_vs_exact: Option<f64>,
    pub cone_tolerance: Option<f64>,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub max_residual: Option<f64>,
    pub max_iterations: Option<usize>,
    pub max_increment: Option<f64>,
    pub max_disagreement: Option<f64>,
    pub max_gap: Option<f64>,
    pub max_prediction_error: Option<f64>,
    pub max_metric_defect: Option<f64>,
    pub max_shift_gap: Option<f64>,
    pub min_order: Option<f64>,
    pub max_concavity_error: Option<f64>,
    pub rescaled_convergence: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub kind: Kind,
    pub seed: u64,
    /// Output directory, relative to the output root.
    pub output: String,
    pub equation: Equation,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub boundary: BoundaryConfig,
    pub initial: InitialConfig,
    pub condition: Option<ConditionSpec>,
    pub decay: DecayConfig,
    pub expander: ExpanderConfig,
    pub transform_samples: usize,
    pub identity_samples: usize,
    pub rescale: Option<RescaleConfig>,
    pub study_half_widths: Vec<f64>,
    pub assert: Assertions,
}

impl Config {
    pub fn regime(&self) -> TauRegime {
        TauRegime::new(self.equation.tau).expect("validated at parse time")
    }

    /// Eigenvalue bounds of the configured condition, if it is a cone.
    pub fn cone_bounds(&self) -> Option<(f64, f64)> {
        self.condition.and_then(|c| c.bounds().ok())
    }
}

pub fn parse(text: &str) -> Result<Config> {
    parse_with_overrides(text, &[])
}

/// Parses `text` after applying `key.path=value` overrides. Values are read
/// as TOML, falling back to a bare string.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Config> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1));
        let msg = e.message().replace('\n', " ");
        ConfigError::new(
            line.map_or("config".to_string(), |l| format!("line {l}")),
            msg.trim().to_string(),
        )
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    from_table(&table)
}

pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        return Err(ConfigError::new(
            spec,
            "override must look like key.path=value",
        ));
    };
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "empty component in override key"));
    }
    let mut current = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        current = match entry {
            Value::Table(t) => t,
            _ => return Err(ConfigError::new(parts[..=i].join("."), "is not a section")),
        };
    }
    current.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

const TOP_KEYS: &[&str] = &[
    "kind",
    "seed",
    "output",
    "equation",
    "grid",
    "time",
    "boundary",
    "initial",
    "condition",
    "decay",
    "expander",
    "transform",
    "identity",
    "rescale",
    "study",
    "assert",
];

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn open(root: &'a Table, name: &'static str, allowed: &[&str]) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(ConfigError::new(name, "must be a section")),
        };
        if let Some(t) = table {
            check_keys(t, allowed, &format!("{name}."))?;
        }
        Ok(Self { name, table })
    }

    fn present(&self) -> bool {
        self.table.is_some()
    }

    fn key(&self, k: &str) -> String {
        if self.name.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.name)
        }
    }

    fn raw(&self, k: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn f64(&self, k: &str) -> Result<Option<f64>> {
        match self.raw(k) {
            None => Ok(None),
            Some(v) => as_f64(v)
                .map(Some)
                .ok_or_else(|| ConfigError::new(self.key(k), "expected a number")),
        }
    }

    fn f64_or(&self, k: &str, default: f64) -> Result<f64> {
        Ok(self.f64(k)?.unwrap_or(default))
    }

    fn required_f64(&self, k: &str) -> Result<f64> {
        self.f64(k)?
            .ok_or_else(|| ConfigError::new(self.key(k), "is required"))
    }

    fn positive(&self, k: &str, value: f64) -> Result<f64> {
        if value > 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(ConfigError::new(
                self.key(k),
                format!("must be positive (got {value})"),
            ))
        }
    }

    fn uint(&self, k: &str) -> Result<Option<u64>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(ConfigError::new(
                self.key(k),
                "expected a non-negative integer",
            )),
        }
    }

    fn bool(&self, k: &str) -> Result<Option<bool>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(ConfigError::new(self.key(k), "expected true or false")),
        }
    }

    fn str(&self, k: &str) -> Result<Option<&'a str>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(ConfigError::new(self.key(k), "expected a string")),
        }
    }

    fn f64_list(&self, k: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| {
                    as_f64(v).ok_or_else(|| {
                        ConfigError::new(self.key(k), "expected an array of numbers")
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(ConfigError::new(
                self.key(k),
                "expected an array of numbers",
            )),
        }
    }

    fn choice<T: Copy>(&self, k: &str, options: &[(&str, T)], default: T) -> Result<T> {
        let Some(s) = self.str(k)? else {
            return Ok(default);
        };
        options
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                ConfigError::new(
                    self.key(k),
                    format!(
                        "unknown value \"{s}\" (expected one of {})",
                        names.join(", ")
                    ),
                )
            })
    }

    fn expression(&self, k: &str) -> Result<Option<String>> {
        let Some(s) = self.str(k)? else {
            return Ok(None);
        };
        Expr::parse(s).map_err(|e| ConfigError::new(self.key(k), e.to_string()))?;
        Ok(Some(s.to_string()))
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn check_keys(t: &Table, allowed: &[&str], prefix: &str) -> Result<()> {
    let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
    match t.keys().find(|k| !allowed.contains(k.as_str())) {
        Some(k) => Err(ConfigError::new(format!("{prefix}{k}"), "unknown key")),
        None => Ok(()),
    }
}

fn from_table(root: &Table) -> Result<Config> {
    check_keys(root, TOP_KEYS, "")?;
    let top = Section {
        name: "",
        table: Some(root),
    };
    let kind_name = top
        .str("kind")?
        .ok_or_else(|| ConfigError::new("kind", "is required"))?;
    let kind = Kind::parse(kind_name).ok_or_else(|| {
        let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
        ConfigError::new(
            "kind",
            format!(
                "unknown kind \"{kind_name}\" (expected one of {})",
                names.join(", ")
            ),
        )
    })?;
    let seed = top.uint("seed")?.unwrap_or(0);
    let output = top.str("output")?.unwrap_or(kind.name()).to_string();
    if output.is_empty() || output.split(['/', '\\']).any(|p| p == "..") {
        return Err(ConfigError::new(
            "output",
            "must be a non-empty relative path without '..'",
        ));
    }

    let eq = Section::open(root, "equation", &["tau", "dim", "gamma"])?;
    let tau = match eq.raw("tau") {
        // identity-check samples its own angles
        None if kind == Kind::IdentityCheck => std::f64::consts::FRAC_PI_4,
        None => return Err(ConfigError::new("equation.tau", "is required")),
        Some(Value::String(s)) => {
            Expr::parse(s)
                .ok()
                .and_then(|e| e.constant())
                .ok_or_else(|| {
                    ConfigError::new(
                        "equation.tau",
                        format!("\"{s}\" is not a constant expression"),
                    )
                })?
        }
        Some(v) => {
            as_f64(v).ok_or_else(|| ConfigError::new("equation.tau", "expected a number"))?
        }
    };
    TauRegime::new(tau).map_err(|e| ConfigError::new("equation.tau", e.to_string()))?;
    let dim = eq.uint("dim")?.unwrap_or(2) as usize;
    if !(1..=3).contains(&dim) {
        return Err(ConfigError::new(
            "equation.dim",
            format!("must be 1, 2 or 3 (got {dim})"),
        ));
    }
    let gamma = eq.f64_or("gamma", 1.0)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ConfigError::new(
            "equation.gamma",
            format!("must lie in [0, 1] (got {gamma})"),
        ));
    }
    let equation = Equation { tau, dim, gamma };

    let gs = Section::open(root, "grid", &["half_width", "spacing"])?;
    let needs_grid = kind != Kind::IdentityCheck;
    let (half_width, spacing) = if needs_grid {
        (
            gs.positive("half_width", gs.required_f64("half_width")?)?,
            gs.positive("spacing", gs.required_f64("spacing")?)?,
        )
    } else {
        (
            gs.positive("half_width", gs.f64_or("half_width", 1.0)?)?,
            gs.positive("spacing", gs.f64_or("spacing", 0.1)?)?,
        )
    };
    let ratio = half_width / spacing;
    if ratio * (1.0 + 1e-12) < 2.0 {
        return Err(ConfigError::new(
            "grid.spacing",
            "needs at least 5 points per axis (half_width >= 2 * spacing)",
        ));
    }
    let grid = GridConfig {
        half_width,
        spacing,
    };

    let ts = Section::open(
        root,
        "time",
        &["t_end", "snapshots", "safety", "monitor_stride", "fixed_dt"],
    )?;
    let t_end = if kind.is_flow() {
        ts.required_f64("t_end")?
    } else {
        ts.f64_or("t_end", 0.0)?
    };
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(ConfigError::new(
            "time.t_end",
            format!("must be non-negative (got {t_end})"),
        ));
    }
    let snapshots = ts.f64_list("snapshots")?.unwrap_or_else(|| vec![t_end]);
    if let Some(bad) = snapshots.iter().find(|&&s| !(0.0..=t_end).contains(&s)) {
        return Err(ConfigError::new(
            "time.snapshots",
            format!("{bad} lies outside [0, t_end]"),
        ));
    }
    let safety = ts.f64_or("safety", 0.5)?;
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(ConfigError::new(
            "time.safety",
            format!("must lie in (0, 1] (got {safety})"),
        ));
    }
    let monitor_stride = ts.uint("monitor_stride")?.unwrap_or(10) as usize;
    if monitor_stride == 0 {
        return Err(ConfigError::new(
            "time.monitor_stride",
            "must be at least 1",
        ));
    }
    let fixed_dt = ts
        .f64("fixed_dt")?
        .map(|v| ts.positive("fixed_dt", v))
        .transpose()?;
    let time = TimeConfig {
        t_end,
        snapshots,
        safety,
        monitor_stride,
        fixed_dt,
    };

    let is = Section::open(
        root,
        "initial",
        &[
            "preset",
            "c",
            "fraction",
            "radius",
            "k",
            "center",
            "random_center",
            "epsilon",
            "delta",
            "expression",
        ],
    )?;
    let preset = is.choice(
        "preset",
        &[
            ("quadratic", Preset::Quadratic),
            ("perturbed-quadratic", Preset::PerturbedQuadratic),
            ("angular", Preset::Angular),
            ("expression", Preset::Expression),
        ],
        Preset::Quadratic,
    )?;
    let fraction = is.f64_or("fraction", 0.5)?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ConfigError::new(
            "initial.fraction",
            format!("must lie in (0, 1) (got {fraction})"),
        ));
    }
    let radius = is.positive("radius", is.f64_or("radius", 0.5 * half_width)?)?;
    let k = is.uint("k")?.unwrap_or(4);
    if k == 0 || k > 64 {
        return Err(ConfigError::new("initial.k", "must lie in 1..=64"));
    }
    let center = is.f64_list("center")?.unwrap_or_else(|| vec![0.0; dim]);
    if center.len() != dim {
        return Err(ConfigError::new(
            "initial.center",
            format!("needs {dim} coordinates (got {})", center.len()),
        ));
    }
    let expression = is.expression("expression")?;
    if preset == Preset::Expression && expression.is_none() {
        return Err(ConfigError::new(
            "initial.expression",
            "is required by the expression preset",
        ));
    }
    let initial = InitialConfig {
        preset,
        c: is.f64_or("c", 1.0)?,
        fraction,
        radius,
        k: k as u32,
        center,
        random_center: is.bool("random_center")?.unwrap_or(false),
        epsilon: is.f64("epsilon")?,
        delta: is.f64("delta")?,
        expression,
    };
    let regime = TauRegime::new(tau).expect("checked above");
    if matches!(
        preset,
        Preset::Quadratic | Preset::PerturbedQuadratic | Preset::Angular
    ) && !regime.admits(initial.c)
    {
        return Err(ConfigError::new(
            "initial.c",
            format!(
                "{} lies outside the admissible cone of tau = {tau}",
                initial.c
            ),
        ));
    }

    let cs = Section::open(
        root,
        "condition",
        &["kind", "zeta", "rho", "mu", "lam", "eta"],
    )?;
    let condition = if cs.present() {
        let name = cs
            .str("kind")?
            .ok_or_else(|| ConfigError::new("condition.kind", "is required"))?;
        let spec = match name {
            "A" => ConditionSpec::A,
            "B" => ConditionSpec::B {
                zeta: cs.required_f64("zeta")?,
                rho: cs.required_f64("rho")?,
            },
            "E" => ConditionSpec::E {
                tau,
                mu: cs.required_f64("mu")?,
                lam: cs.required_f64("lam")?,
            },
            "L" => ConditionSpec::L {
                tau,
                eta: cs.required_f64("eta")?,
            },
            other => {
                return Err(ConfigError::new(
                    "condition.kind",
                    format!("unknown condition \"{other}\" (expected A, B, E or L)"),
                ))
            }
        };
        let stray: &[&str] = match spec {
            ConditionSpec::A => &["zeta", "rho", "mu", "lam", "eta"],
            ConditionSpec::B { .. } => &["mu", "lam", "eta"],
            ConditionSpec::E { .. } => &["zeta", "rho", "eta"],
            ConditionSpec::L { .. } => &["zeta", "rho", "mu", "lam"],
        };
        if let Some(k) = stray.iter().find(|k| cs.raw(k).is_some()) {
            return Err(ConfigError::new(
                cs.key(k),
                format!("does not apply to condition {name}"),
            ));
        }
        if matches!(spec, ConditionSpec::A | ConditionSpec::B { .. })
            && (tau - FRAC_PI_4).abs() > TAU_TOLERANCE
        {
            return Err(ConfigError::new(
                "condition.kind",
                format!("condition {name} belongs to tau = pi/4"),
            ));
        }
        spec.validate().map_err(|e| {
            let msg = e.to_string();
            let key = ["zeta", "mu", "lam", "eta"]
                .into_iter()
                .find(|k| msg.starts_with(k))
                .unwrap_or("kind");
            ConfigError::new(cs.key(key), msg)
        })?;
        Some(spec)
    } else {
        None
    };

    let bs = Section::open(root, "boundary", &["mode", "expression"])?;
    let mode = bs.choice(
        "mode",
        &[
            ("frozen", BoundaryMode::Frozen),
            ("exact", BoundaryMode::Exact),
            ("quadratic-hold", BoundaryMode::QuadraticHold),
        ],
        BoundaryMode::Frozen,
    )?;
    let boundary_expr = bs.expression("expression")?;
    if mode == BoundaryMode::Exact && boundary_expr.is_none() && preset != Preset::Quadratic {
        return Err(ConfigError::new(
            "boundary.expression",
            "exact mode needs an expression unless the preset is quadratic",
        ));
    }
    let boundary = BoundaryConfig {
        mode,
        expression: boundary_expr,
    };

    let needs_cone = |what: &str| -> Result<()> {
        if condition.is_none_or(|c| c.bounds().is_err()) {
            return Err(ConfigError::new(
                "condition",
                format!("{what} needs a B, E or L condition"),
            ));
        }
        Ok(())
    };
    if preset == Preset::PerturbedQuadratic && initial.epsilon.is_none() {
        needs_cone("perturbed-quadratic without initial.epsilon")?;
    }
    if preset == Preset::Angular && initial.delta.is_none() {
        needs_cone("angular without initial.delta")?;
    }
    if let (Some((lo, hi)), Preset::PerturbedQuadratic | Preset::Angular) =
        (condition.and_then(|c| c.bounds().ok()), preset)
    {
        if !(initial.c > lo && initial.c < hi) {
            return Err(ConfigError::new(
                "initial.c",
                format!(
                    "{} must lie strictly inside the condition cone [{lo}, {hi}]",
                    initial.c
                ),
            ));
        }
    }
    if kind == Kind::Cone {
        needs_cone("the cone kind")?;
    }

    let ds = Section::open(root, "decay", &["t_min", "t_max", "transient_fraction"])?;
    let decay = DecayConfig {
        t_min: ds.f64("t_min")?,
        t_max: ds.f64("t_max")?,
        transient_fraction: ds.f64_or(
            "transient_fraction",
            lagflow_core::analysis::DEFAULT_TRANSIENT_FRACTION,
        )?,
    };
    if !(0.0..1.0).contains(&decay.transient_fraction) {
        return Err(ConfigError::new(
            "decay.transient_fraction",
            "must lie in [0, 1)",
        ));
    }
    if let (Some(a), Some(b)) = (decay.t_min, decay.t_max) {
        if !(a < b) {
            return Err(ConfigError::new("decay.t_max", "must exceed decay.t_min"));
        }
    }

    let es = Section::open(
        root,
        "expander",
        &[
            "method",
            "tol",
            "max_iter",
            "guess",
            "guess_scale",
            "s_max",
            "flow_tol",
        ],
    )?;
    let expander = ExpanderConfig {
        method: es.choice(
            "method",
            &[
                ("newton", ExpanderMethod::Newton),
                ("normalized", ExpanderMethod::Normalized),
                ("both", ExpanderMethod::Both),
            ],
            ExpanderMethod::Both,
        )?,
        tol: es.positive("tol", es.f64_or("tol", 1e-9)?)?,
        max_iter: es.uint("max_iter")?.unwrap_or(15) as usize,
        guess: es.choice(
            "guess",
            &[
                ("perturbed-quadratic", GuessKind::PerturbedQuadratic),
                ("datum", GuessKind::Datum),
            ],
            GuessKind::PerturbedQuadratic,
        )?,
        guess_scale: es.positive("guess_scale", es.f64_or("guess_scale", 0.9)?)?,
        s_max: es.positive("s_max", es.f64_or("s_max", 60.0)?)?,
        flow_tol: es.positive("flow_tol", es.f64_or("flow_tol", 1e-6)?)?,
    };
    if kind == Kind::Expander && preset == Preset::PerturbedQuadratic {
        return Err(ConfigError::new(
            "initial.preset",
            "the expander kind needs 2-homogeneous data (quadratic, angular or expression)",
        ));
    }

    if matches!(kind, Kind::Expander | Kind::TransformCheck) && gamma != 1.0 {
        return Err(ConfigError::new(
            "equation.gamma",
            format!(
                "the {} kind uses the full operator (gamma = 1)",
                kind.name()
            ),
        ));
    }

    let tr = Section::open(root, "transform", &["samples"])?;
    let transform_samples = tr.uint("samples")?.unwrap_or(10) as usize;
    if kind == Kind::TransformCheck
        && ((tau - FRAC_PI_4).abs() <= TAU_TOLERANCE
            || tau <= TAU_TOLERANCE
            || tau >= std::f64::consts::FRAC_PI_2 - TAU_TOLERANCE)
    {
        return Err(ConfigError::new(
            "equation.tau",
            "transform-check needs tau in (0, pi/4) or (pi/4, pi/2)",
        ));
    }
    let id = Section::open(root, "identity", &["samples"])?;
    let identity_samples = id.uint("samples")?.unwrap_or(10_000) as usize;
    if identity_samples == 0 {
        return Err(ConfigError::new("identity.samples", "must be at least 1"));
    }

    let rs = Section::open(root, "rescale", &["times", "half_width"])?;
    let rescale = if rs.present() {
        let times = rs
            .f64_list("times")?
            .ok_or_else(|| ConfigError::new("rescale.times", "is required"))?;
        if times.len() < 2 || times.windows(2).any(|w| !(w[0] < w[1])) || times[0] <= 0.0 {
            return Err(ConfigError::new(
                "rescale.times",
                "needs at least two increasing positive times",
            ));
        }
        if times[times.len() - 1] > t_end {
            return Err(ConfigError::new(
                "rescale.times",
                "last time exceeds time.t_end",
            ));
        }
        Some(RescaleConfig {
            times,
            half_width: rs.positive("half_width", rs.f64_or("half_width", 1.0)?)?,
        })
    } else {
        None
    };

    let ss = Section::open(root, "study", &["half_widths"])?;
    let study_half_widths = ss.f64_list("half_widths")?.unwrap_or_default();
    for &w in &study_half_widths {
        ss.positive("half_widths", w)?;
    }

    let as_ = Section::open(
        root,
        "assert",
        &[
            "max_error_vs_exact",
            "cone_tolerance",
            "alpha_min",
            "alpha_max",
            "max_residual",
            "max_iterations",
            "max_increment",
            "max_disagreement",
            "max_gap",
            "max_prediction_error",
            "max_metric_defect",
            "max_shift_gap",
            "min_order",
            "max_concavity_error",
            "rescaled_convergence",
        ],
    )?;
    let assert = Assertions {
        max_error_vs_exact: as_.f64("max_error_vs_exact")?,
        cone_tolerance: as_.f64("cone_tolerance")?,
        alpha_min: as_.f64("alpha_min")?,
        alpha_max: as_.f64("alpha_max")?,
        max_residual: as_.f64("max_residual")?,
        max_iterations: as_.uint("max_iterations")?.map(|v| v as usize),
        max_increment: as_.f64("max_increment")?,
        max_disagreement: as_.f64("max_disagreement")?,
        max_gap: as_.f64("max_gap")?,
        max_prediction_error: as_.f64("max_prediction_error")?,
        max_metric_defect: as_.f64("max_metric_defect")?,
        max_shift_gap: as_.f64("max_shift_gap")?,
        min_order: as_.f64("min_order")?,
        max_concavity_error: as_.f64("max_concavity_error")?,
        rescaled_convergence: as_.bool("rescaled_convergence")?,
    };
    if assert.rescaled_convergence.is_some() && rescale.is_none() {
        return Err(ConfigError::new(
            "assert.rescaled_convergence",
            "needs a [rescale] section",
        ));
    }

    Ok(Config {
        kind,
        seed,
        output,
        equation,
        grid,
        time,
        boundary,
        initial,
        condition,
        decay,
        expander,
        transform_samples,
        identity_samples,
        rescale,
        study_half_widths,
        assert,
    })
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn put_opt(t: &mut Table, k: &str, v: Option<Value>) {
    if let Some(v) = v {
        t.insert(k.to_string(), v);
    }
}

/// The configuration as a TOML table with every default filled in.
pub fn to_table(c: &Config) -> Table {
    let mut root = Table::new();
    root.insert("kind".into(), c.kind.name().into());
    root.insert("seed".into(), Value::Integer(c.seed as i64));
    root.insert("output".into(), c.output.clone().into());

    let mut eq = Table::new();
    eq.insert("tau".into(), Value::Float(c.equation.tau));
    eq.insert("dim".into(), Value::Integer(c.equation.dim as i64));
    eq.insert("gamma".into(), Value::Float(c.equation.gamma));
    root.insert("equation".into(), Value::Table(eq));

    let mut grid = Table::new();
    grid.insert("half_width".into(), Value::Float(c.grid.half_width));
    grid.insert("spacing".into(), Value::Float(c.grid.spacing));
    root.insert("grid".into(), Value::Table(grid));

    let mut time = Table::new();
    time.insert("t_end".into(), Value::Float(c.time.t_end));
    time.insert("snapshots".into(), floats(&c.time.snapshots));
    time.insert("safety".into(), Value::Float(c.time.safety));
    time.insert(
        "monitor_stride".into(),
        Value::Integer(c.time.monitor_stride as i64),
    );
    put_opt(&mut time, "fixed_dt", c.time.fixed_dt.map(Value::Float));
    root.insert("time".into(), Value::Table(time));

    let mut b = Table::new();
    b.insert("mode".into(), c.boundary.mode.name().into());
    put_opt(
        &mut b,
        "expression",
        c.boundary.expression.clone().map(Value::String),
    );
    root.insert("boundary".into(), Value::Table(b));

    let i = &c.initial;
    let mut init = Table::new();
    init.insert("preset".into(), i.preset.name().into());
    init.insert("c".into(), Value::Float(i.c));
    init.insert("fraction".into(), Value::Float(i.fraction));
    init.insert("radius".into(), Value::Float(i.radius));
    init.insert("k".into(), Value::Integer(i.k as i64));
    init.insert("center".into(), floats(&i.center));
    init.insert("random_center".into(), Value::Boolean(i.random_center));
    put_opt(&mut init, "epsilon", i.epsilon.map(Value::Float));
    put_opt(&mut init, "delta", i.delta.map(Value::Float));
    put_opt(
        &mut init,
        "expression",
        i.expression.clone().map(Value::String),
    );
    root.insert("initial".into(), Value::Table(init));

    if let Some(spec) = c.condition {
        let mut cond = Table::new();
        cond.insert("kind".into(), spec.name().into());
        match spec {
            ConditionSpec::A => {}
            ConditionSpec::B { zeta, rho } => {
                cond.insert("zeta".into(), Value::Float(zeta));
                cond.insert("rho".into(), Value::Float(rho));
            }
            ConditionSpec::E { mu, lam, .. } => {
                cond.insert("mu".into(), Value::Float(mu));
                cond.insert("lam".into(), Value::Float(lam));
            }
            ConditionSpec::L { eta, .. } => {
                cond.insert("eta".into(), Value::Float(eta));
            }
        }
        root.insert("condition".into(), Value::Table(cond));
    }

    let mut d = Table::new();
    put_opt(&mut d, "t_min", c.decay.t_min.map(Value::Float));
    put_opt(&mut d, "t_max", c.decay.t_max.map(Value::Float));
    d.insert(
        "transient_fraction".into(),
        Value::Float(c.decay.transient_fraction),
    );
    root.insert("decay".into(), Value::Table(d));

    let e = &c.expander;
    let mut ex = Table::new();
    ex.insert("method".into(), e.method.name().into());
    ex.insert("tol".into(), Value::Float(e.tol));
    ex.insert("max_iter".into(), Value::Integer(e.max_iter as i64));
    ex.insert("guess".into(), e.guess.name().into());
    ex.insert("guess_scale".into(), Value::Float(e.guess_scale));
    ex.insert("s_max".into(), Value::Float(e.s_max));
    ex.insert("flow_tol".into(), Value::Float(e.flow_tol));
    root.insert("expander".into(), Value::Table(ex));

    let mut tr = Table::new();
    tr.insert("samples".into(), Value::Integer(c.transform_samples as i64));
    root.insert("transform".into(), Value::Table(tr));
    let mut id = Table::new();
    id.insert("samples".into(), Value::Integer(c.identity_samples as i64));
    root.insert("identity".into(), Value::Table(id));

    if let Some(r) = &c.rescale {
        let mut rs = Table::new();
        rs.insert("times".into(), floats(&r.times));
        rs.insert("half_width".into(), Value::Float(r.half_width));
        root.insert("rescale".into(), Value::Table(rs));
    }
    let mut st = Table::new();
    st.insert("half_widths".into(), floats(&c.study_half_widths));
    root.insert("study".into(), Value::Table(st));

    let a = &c.assert;
    let mut at = Table::new();
    let f = |v: Option<f64>| v.map(Value::Float);
    put_opt(&mut at, "max_error_vs_exact", f(a.max_error_vs_exact));
    put_opt(&mut at, "cone_tolerance", f(a.cone_tolerance));
    put_opt(&mut at, "alpha_min", f(a.alpha_min));
    put_opt(&mut at, "alpha_max", f(a.alpha_max));
    put_opt(&mut at, "max_residual", f(a.max_residual));
    put_opt(
        &mut at,
        "max_iterations",
        a.max_iterations.map(|v| Value::Integer(v as i64)),
    );
    put_opt(&mut at, "max_increment", f(a.max_increment));
    put_opt(&mut at, "max_disagreement", f(a.max_disagreement));
    put_opt(&mut at, "max_gap", f(a.max_gap));
    put_opt(&mut at, "max_prediction_error", f(a.max_prediction_error));
    put_opt(&mut at, "max_metric_defect", f(a.max_metric_defect));
    put_opt(&mut at, "max_shift_gap", f(a.max_shift_gap));
    put_opt(&mut at, "min_order", f(a.min_order));
    put_opt(&mut at, "max_concavity_error", f(a.max_concavity_error));
    put_opt(
        &mut at,
        "rescaled_convergence",
        a.rescaled_convergence.map(Value::Boolean),
    );
    root.insert("assert".into(), Value::Table(at));
    root
}

pub fn emit(c: &Config) -> String {
    toml::to_string(&to_table(c)).expect("a TOML table always serializes")
}
