//! On-disk formats: field snapshots (text and JSON), the monitor CSV, and a
//! JSON writer that prints every float with 17 significant digits.

use std::io::{self, Write};

use lagflow_core::analysis::DecayFit;
use lagflow_core::flow::Monitor;
use lagflow_core::{Grid, ScalarField};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::Error;

pub const MONITOR_HEADER: &str = "t,lam_min,lam_max,d2_sup,d3_sup,pde_residual";

/// Time stamp written for stationary (expander) solutions.
pub const STATIONARY_TIME: f64 = -1.0;

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header `dim m h L t`, then one value per line in row-major axis order.
pub fn snapshot_text(field: &ScalarField, t: f64) -> String {
    let g = field.grid();
    let mut out = format!(
        "{} {} {} {} {}\n",
        g.dim(),
        g.points_per_axis(),
        fmt_f64(g.spacing()),
        fmt_f64(g.half_width()),
        fmt_f64(t)
    );
    for &v in field.values() {
        out.push_str(&fmt_f64(v));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SnapshotJson<'a> {
    dim: usize,
    m: usize,
    h: f64,
    #[serde(rename = "L")]
    half_width: f64,
    t: f64,
    values: &'a [f64],
}

pub fn snapshot_json(field: &ScalarField, t: f64) -> String {
    let g = field.grid();
    to_json(&SnapshotJson {
        dim: g.dim(),
        m: g.points_per_axis(),
        h: g.spacing(),
        half_width: g.half_width(),
        t,
        values: field.values(),
    })
}

/// Inverse of [`snapshot_text`].
pub fn parse_snapshot(text: &str) -> Result<(ScalarField, f64), Error> {
    let bad = |msg: &str| Error::Format(format!("snapshot: {msg}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty file"))?
        .split_whitespace()
        .collect();
    if header.len() != 5 {
        return Err(bad("header must read `dim m h L t`"));
    }
    let dim: usize = header[0]
        .parse()
        .map_err(|_| bad("dim is not an integer"))?;
    let m: usize = header[1].parse().map_err(|_| bad("m is not an integer"))?;
    let h: f64 = header[2].parse().map_err(|_| bad("h is not a number"))?;
    let t: f64 = header[4].parse().map_err(|_| bad("t is not a number"))?;
    if m.is_multiple_of(2) {
        return Err(bad("m must be odd"));
    }
    let grid = Grid::with_half_points(dim, m / 2, h)?;
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad("value is not a number"))?;
    Ok((ScalarField::from_values(&grid, values)?, t))
}

pub fn monitor_row(m: &Monitor) -> String {
    [
        m.t,
        m.lam_min,
        m.lam_max,
        m.d2_sup,
        m.d3_sup,
        m.pde_residual,
    ]
    .map(fmt_f64)
    .join(",")
}

/// Monitor CSV with an optional `# decay ...` footer line.
pub fn monitor_csv(monitors: &[Monitor], footer: Option<&str>) -> String {
    let mut out = String::from(MONITOR_HEADER);
    out.push('\n');
    for m in monitors {
        out.push_str(&monitor_row(m));
        out.push('\n');
    }
    if let Some(f) = footer {
        out.push_str("# ");
        out.push_str(f);
        out.push('\n');
    }
    out
}

pub fn decay_footer(series: &str, fit: &DecayFit) -> String {
    format!(
        "decay {series}: alpha={} c={} residual={} samples={} squared_alpha={}",
        fmt_f64(fit.alpha),
        fmt_f64(fit.c),
        fmt_f64(fit.residual),
        fit.samples,
        fmt_f64(2.0 * fit.alpha)
    )
}

/// Pretty JSON with floats printed by [`fmt_f64`]. Non-finite floats
/// become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits utf-8")
}

struct Fixed17<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}
