//! Plain-text artifacts: CSV tables and JSON reports.
//!
//! Every float goes through [`fmt_float`], fixed-width scientific notation
//! with 17 significant digits. That is enough for an exact `f64` round trip
//! and, being fixed-width, it makes identical runs produce byte-identical
//! files — the property the determinism tests pin down.

use crate::grid::Grid;
use crate::optimizer::OptimizeReport;
use crate::state::{Control, ProblemSpec, Trajectory};
use serde::Serialize;
use std::io;
use thiserror::Error;

/// `%.16e`-style rendering: one leading digit, sixteen after the point.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Nodal trajectory as `t,x,value` rows, all levels, all nodes, LF endings.
pub fn trajectory_csv(grid: &Grid, y: &Trajectory) -> String {
    let mut out = String::from("t,x,value\n");
    for m in 0..=y.nt() {
        let level = y.level(m);
        let t = fmt_float(y.time(m));
        for i in 0..grid.n() {
            out.push_str(&t);
            out.push(',');
            out.push_str(&fmt_float(grid.node(i)));
            out.push(',');
            out.push_str(&fmt_float(level[i]));
            out.push('\n');
        }
    }
    out
}

/// Control as `t,x,u` rows over steps `1..=nt` and control-region nodes only.
pub fn control_csv(grid: &Grid, u: &Control) -> String {
    let omega: Vec<usize> = grid.omega_nodes().collect();
    let mut out = String::from("t,x,u\n");
    for m in 1..=u.nt() {
        let step = u.step(m);
        let t = fmt_float(m as f64 * u.dt());
        for &i in &omega {
            out.push_str(&t);
            out.push(',');
            out.push_str(&fmt_float(grid.node(i)));
            out.push(',');
            out.push_str(&fmt_float(step[i]));
            out.push('\n');
        }
    }
    out
}

/// Optimizer progress as `iter,cost,residual` rows.
pub fn history_csv(report: &OptimizeReport) -> String {
    let mut out = String::from("iter,cost,residual\n");
    for (k, (c, r)) in report
        .cost_history
        .iter()
        .zip(&report.residual_history)
        .enumerate()
    {
        out.push_str(&k.to_string());
        out.push(',');
        out.push_str(&fmt_float(*c));
        out.push(',');
        out.push_str(&fmt_float(*r));
        out.push('\n');
    }
    out
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("expected header `t,x,u`, found `{0}`")]
    BadHeader(String),
    #[error("line {line}: expected three comma-separated fields")]
    BadRow { line: usize },
    #[error("line {line}: could not parse `{token}` as a number")]
    BadNumber { line: usize, token: String },
    #[error("line {line}: time {t} does not match any control step")]
    UnknownTime { line: usize, t: f64 },
    #[error("line {line}: position {x} is not a control-region node")]
    UnknownNode { line: usize, x: f64 },
    #[error("line {line}: duplicate entry for this time and node")]
    DuplicateEntry { line: usize },
    #[error("control table has {got} entries, the problem needs {expected}")]
    WrongCount { expected: usize, got: usize },
}

/// Parse a control table written by [`control_csv`] back onto the problem's
/// grid. Times and positions are matched to the nearest step and node with a
/// relative tolerance, the full control region must be covered exactly once,
/// and rows outside it are rejected.
pub fn read_control_csv(p: &ProblemSpec, text: &str) -> Result<Control, CsvError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l)
        .ok_or_else(|| CsvError::BadHeader(String::new()))?;
    if header.trim() != "t,x,u" {
        return Err(CsvError::BadHeader(header.to_string()));
    }

    let grid = p.grid();
    let dt = p.dt();
    let h = grid.h();
    let mut u = Control::zeros(p);
    let mut filled = vec![false; p.nt() * grid.n()];
    let mut got = 0usize;

    for (idx, raw) in lines {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split(',');
        let (Some(ts), Some(xs), Some(vs), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(CsvError::BadRow { line });
        };
        let parse = |token: &str| {
            token.trim().parse::<f64>().map_err(|_| CsvError::BadNumber {
                line,
                token: token.trim().to_string(),
            })
        };
        let t = parse(ts)?;
        let x = parse(xs)?;
        let value = parse(vs)?;

        let m = (t / dt).round();
        if !(1.0..=p.nt() as f64).contains(&m) || (t - m * dt).abs() > 1e-9 * dt.max(t.abs()) {
            return Err(CsvError::UnknownTime { line, t });
        }
        let m = m as usize;
        let i = (x / h).round();
        if !(0.0..grid.n() as f64).contains(&i) {
            return Err(CsvError::UnknownNode { line, x });
        }
        let i = i as usize;
        if (x - grid.node(i)).abs() > 1e-9 * h.max(x.abs()) || !grid.in_omega(i) {
            return Err(CsvError::UnknownNode { line, x });
        }

        let slot = (m - 1) * grid.n() + i;
        if filled[slot] {
            return Err(CsvError::DuplicateEntry { line });
        }
        filled[slot] = true;
        got += 1;
        u.step_mut(m)[i] = value;
    }

    let expected = p.nt() * grid.omega_node_count();
    if got != expected {
        return Err(CsvError::WrongCount { expected, got });
    }
    Ok(u)
}

/// Pretty JSON with every float written by [`fmt_float`]. The only deviation
/// from stock `serde_json` output is the number format.
struct FullPrecision {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl FullPrecision {
    fn new() -> Self {
        FullPrecision {
            inner: serde_json::ser::PrettyFormatter::new(),
        }
    }
}

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        writer.write_all(fmt_float(value).as_bytes())
    }

    fn begin_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_array(writer)
    }

    fn end_array<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object(writer)
    }

    fn end_object<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W>(&mut self, writer: &mut W, first: bool) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.inner.end_object_value(writer)
    }
}

/// Serialize to pretty JSON with full-precision floats and a trailing
/// newline. Serialization of the report types cannot fail.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision::new());
    value
        .serialize(&mut ser)
        .expect("report serialization is infallible");
    out.push(b'\n');
    String::from_utf8(out).expect("serializer emits UTF-8")
}
