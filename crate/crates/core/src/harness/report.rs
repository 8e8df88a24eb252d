//! CSV and SVG writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::optimizers::{Record, Trajectory};
use crate::{PddError, Result};

pub const TRAJECTORY_HEADER: &str = "iter,f,grad_norm,lyapunov,dist_to_min";

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> PddError + '_ {
    move |source| PddError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes rows with LF line endings.
pub fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| PddError::io(path, e))
}

/// One row per record; `dist_to_min` is blank when the minimizer is unknown.
pub fn emit_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    if traj.records.is_empty() {
        return Err(PddError::Empty("trajectory"));
    }
    write_rows(&traj.records, path)
}

pub fn read_csv(path: &Path) -> Result<Vec<Record>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err(path))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Log-log plot of the gradient norm against `iter + 1`, one polyline per
/// trajectory. Non-positive and non-finite values are skipped.
pub fn emit_svg(series: &[(&str, &Trajectory)], title: &str, path: &Path) -> Result<()> {
    if series.is_empty() || series.iter().any(|(_, t)| t.records.is_empty()) {
        return Err(PddError::Empty("trajectories"));
    }
    let svg = render_svg(series, title);
    fs::write(path, svg).map_err(|e| PddError::io(path, e))
}

fn render_svg(series: &[(&str, &Trajectory)], title: &str) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, t)| {
            t.records
                .iter()
                .filter(|r| r.grad_norm.is_finite() && r.grad_norm > 0.0)
                .map(|r| (((r.iter + 1) as f64).log10(), r.grad_norm.log10()))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (0.0_f64, 1.0_f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !y0.is_finite() {
        y0 = -1.0;
        y1 = 1.0;
    }
    let (x0d, x1d) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0d, y1d) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    x0 = x0d;
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1d - x0) * pw;
    let sy = |y: f64| top + (y1d - y) / (y1d - y0d) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut k = x0d;
    while k <= x1d {
        let x = sx(k);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{k}</text>"##,
            top + ph,
            top + ph + 16.0
        );
        k += 1.0;
    }
    let ystep = ((y1d - y0d) / 10.0).ceil().max(1.0);
    let mut k = y0d;
    while k <= y1d {
        let y = sy(k);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{k}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
        k += ystep;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration + 1</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">gradient norm</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, ((label, _), p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = p
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
