//! CSV and SVG output. Every file is written to a temporary sibling and
//! renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::config::FigureKind;
use crate::error::{Error, Result};
use crate::geometry::BoundaryTrace;
use crate::iterate::{IterationRecord, RunReport, Status};
use crate::replay::ControlSignal;

pub const RUN_HEADER: &str = "k,sqrt2E,lambda,norm_y_L2QT,norm_v_L2_0T,rel_dy,rel_dv";
pub const SUMMARY_HEADER: &str = "c_f,c_u0,algorithm,k_star,sqrt2E_final,norm_y,norm_v,status";
pub const CONTROL_HEADER: &str = "t,v";
pub const SERIES_HEADER: &str = "t,norm";

/// Six significant digits in scientific notation.
pub fn sci(x: f64) -> String {
    format!("{x:.5e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_default()
}

/// Write `contents` to `path` atomically, creating parent directories.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn format_csv(report: &RunReport) -> String {
    let mut out = String::from(RUN_HEADER);
    out.push('\n');
    for r in &report.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.k,
            sci(r.sqrt2e),
            opt(r.lambda),
            sci(r.norm_y),
            sci(r.norm_v),
            opt(r.rel_dy),
            opt(r.rel_dv)
        );
    }
    if report.status != Status::Converged {
        let _ = writeln!(out, "# status={}", report.status);
    }
    out
}

pub fn write_csv(report: &RunReport, path: &Path) -> Result<()> {
    write_atomic(path, format_csv(report).as_bytes())
}

/// Records of a run CSV and its status (converged unless a footer says
/// otherwise).
pub fn parse_csv(text: &str) -> Result<(Vec<IterationRecord>, Status)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RUN_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header '{RUN_HEADER}'"),
            })
        }
    }
    let mut records = Vec::new();
    let mut status = Status::Converged;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(s) = rest.trim().strip_prefix("status=") {
                status = match s {
                    "diverged" => Status::Diverged,
                    "max_iter" => Status::MaxIter,
                    "converged" => Status::Converged,
                    _ => return Err(err(format!("unknown status '{s}'"))),
                };
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(err(format!("expected 7 columns, found {}", cols.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| err(format!("not a number: '{s}'")))
        };
        let opt_num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        records.push(IterationRecord {
            k: cols[0].parse().map_err(|_| err(format!("bad iteration index '{}'", cols[0])))?,
            sqrt2e: num(cols[1])?,
            lambda: opt_num(cols[2])?,
            norm_y: num(cols[3])?,
            norm_v: num(cols[4])?,
            rel_dy: opt_num(cols[5])?,
            rel_dv: opt_num(cols[6])?,
        });
    }
    Ok((records, status))
}

pub fn read_csv(path: &Path) -> Result<(Vec<IterationRecord>, Status)> {
    parse_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// One row of a sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub c_f: f64,
    pub c_u0: f64,
    pub algorithm: String,
    pub k_star: Option<usize>,
    pub sqrt2e_final: f64,
    pub norm_y: f64,
    pub norm_v: f64,
    pub status: Status,
}

impl SummaryRow {
    pub fn from_report(c_f: f64, c_u0: f64, report: &RunReport) -> Self {
        let last = report.last();
        Self {
            c_f,
            c_u0,
            algorithm: report.algorithm.tag().to_string(),
            k_star: report.k_star(),
            sqrt2e_final: last.sqrt2e,
            norm_y: last.norm_y,
            norm_v: last.norm_v,
            status: report.status,
        }
    }
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let k = r.k_star.map_or("DIVERGED".to_string(), |k| k.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.c_f,
            r.c_u0,
            r.algorithm,
            k,
            sci(r.sqrt2e_final),
            sci(r.norm_y),
            sci(r.norm_v),
            r.status
        );
    }
    out
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    write_atomic(path, format_summary(rows).as_bytes())
}

fn format_pairs(header: &str, pairs: impl Iterator<Item = (f64, f64)>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for (a, b) in pairs {
        let _ = writeln!(out, "{},{}", sci(a), sci(b));
    }
    out
}

fn parse_pairs(text: &str, header: &str, path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some(header) {
        return Err(Error::Parse {
            line: 1,
            message: format!("{}: expected header '{header}'", path.display()),
        });
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = || Error::Parse {
            line: idx + 1,
            message: format!("{}: expected two numbers, found '{line}'", path.display()),
        };
        let (a, b) = line.split_once(',').ok_or_else(err)?;
        out.push((a.trim().parse().map_err(|_| err())?, b.trim().parse().map_err(|_| err())?));
    }
    Ok(out)
}

/// Control samples as `t,v` rows.
pub fn write_control(v: &BoundaryTrace, path: &Path) -> Result<()> {
    write_atomic(path, format_pairs(CONTROL_HEADER, v.samples().into_iter()).as_bytes())
}

pub fn read_control(path: &Path) -> Result<ControlSignal> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pairs = parse_pairs(&text, CONTROL_HEADER, path)?;
    let (t, v) = pairs.into_iter().unzip();
    ControlSignal::new(t, v)
}

/// A `(t, value)` curve such as `||y(., t)||`.
pub fn write_series(points: &[(f64, f64)], path: &Path) -> Result<()> {
    write_atomic(path, format_pairs(SERIES_HEADER, points.iter().copied()).as_bytes())
}

pub fn read_series(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, SERIES_HEADER, path)
}

/// The curve plotted by `kind` for a run.
pub fn figure_series(kind: FigureKind, records: &[IterationRecord]) -> Vec<(f64, f64)> {
    match kind {
        FigureKind::ErrorVsK => records.iter().map(|r| (r.k as f64, r.sqrt2e)).collect(),
        FigureKind::LambdaVsK => records
            .iter()
            .filter_map(|r| r.lambda.map(|l| (r.k as f64, l)))
            .collect(),
        FigureKind::NormT | FigureKind::ControlT => Vec::new(),
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn labels(kind: FigureKind) -> (&'static str, &'static str, &'static str) {
    match kind {
        FigureKind::ErrorVsK => ("Residual against iterations", "k", "log10 sqrt(2E)"),
        FigureKind::LambdaVsK => ("Step length against iterations", "k", "lambda"),
        FigureKind::NormT => ("State norm against time", "t", "||y(., t)||"),
        FigureKind::ControlT => ("Control against time", "t", "v(t)"),
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Render a standalone SVG line plot. The error plot uses a base-10
/// logarithmic ordinate and drops non-positive values.
pub fn render_svg(kind: FigureKind, points: &[(f64, f64)]) -> Result<String> {
    let pts: Vec<(f64, f64)> = match kind {
        FigureKind::ErrorVsK => points
            .iter()
            .filter(|p| p.1 > 0.0)
            .map(|&(x, y)| (x, y.log10()))
            .collect(),
        _ => points.to_vec(),
    };
    if pts.is_empty() {
        return Err(Error::invalid(format!("no points to plot for {}", kind.name())));
    }
    if pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::invalid(format!("non-finite point in {}", kind.name())));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        let pad = if y0 == 0.0 { 1.0 } else { 0.1 * y0.abs() };
        y0 -= pad;
        y1 += pad;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
    let (title, xl, yl) = labels(kind);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            sx(xv),
            HEIGHT - BOTTOM + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="#dddddd"/>"##,
            sy(yv),
            WIDTH - RIGHT,
            sy(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{xl}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{yl}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let mut poly = String::new();
    for (i, &(x, y)) in pts.iter().enumerate() {
        if i > 0 {
            poly.push(' ');
        }
        let _ = write!(poly, "{:.2},{:.2}", sx(x), sy(y));
    }
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{poly}"/>"##
    );
    if matches!(kind, FigureKind::ErrorVsK | FigureKind::LambdaVsK) {
        for &(x, y) in &pts {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f5fa8"/>"##,
                sx(x),
                sy(y)
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(kind: FigureKind, points: &[(f64, f64)], path: &Path) -> Result<()> {
    write_atomic(path, render_svg(kind, points)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scientific_format() {
        assert_eq!(sci(191.5), "1.91500e2");
        assert_eq!(sci(2.409e-8), "2.40900e-8");
        assert_eq!(sci(0.0), "0.00000e0");
    }

    #[test]
    fn svg_is_deterministic_and_log_scaled() {
        let pts = [(0.0, 100.0), (1.0, 1.0), (2.0, 1e-4)];
        let a = render_svg(FigureKind::ErrorVsK, &pts).unwrap();
        assert_eq!(a, render_svg(FigureKind::ErrorVsK, &pts).unwrap());
        assert!(a.contains("log10"));
        assert_eq!(a.matches("<circle").count(), 3);
        assert!(render_svg(FigureKind::ControlT, &[]).is_err());
    }

    #[test]
    fn pairs_reject_bad_rows() {
        let p = Path::new("x.csv");
        assert!(parse_pairs("t,v\n1,2\n", CONTROL_HEADER, p).is_ok());
        assert!(parse_pairs("t,v\n1;2\n", CONTROL_HEADER, p).is_err());
        assert!(parse_pairs("a,b\n", CONTROL_HEADER, p).is_err());
    }
}
