//! Result persistence: the time-series CSV, JSON reports and a small
//! self-contained SVG plot.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, RiserError};
use crate::integrator::Trajectory;

/// Column order of `timeseries.csv`. Stable across releases.
pub const TIMESERIES_COLUMNS: [&str; 13] = [
    "t",
    "norm_v_sq",
    "norm_uxx_sq",
    "norm_sum",
    "tension_energy",
    "bn",
    "script_e",
    "big_e",
    "script_e1",
    "w",
    "dissipation",
    "cumulative_dissipation",
    "source_energy",
];

pub fn write_timeseries(traj: &Trajectory, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TIMESERIES_COLUMNS).map_err(csv_err)?;
    for s in &traj.samples {
        let e = &s.energy;
        let row = [
            e.t,
            e.norm_v_sq,
            e.norm_uxx_sq,
            e.norm_v_sq + e.norm_uxx_sq,
            e.tension_energy,
            e.bn,
            e.script_e,
            e.big_e,
            e.script_e1,
            e.w,
            e.dissipation,
            s.cumulative_dissipation,
            e.source_energy,
        ];
        out.write_record(row.iter().map(|x| format_float(*x)))
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:e}")
}

/// Reads a column of a CSV file with a header row.
pub fn read_column(path: impl AsRef<Path>, column: &str) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            RiserError::Fit(format!(
                "column '{name}' not found (have: {})",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let (ti, ci) = (find("t")?, find(column)?);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| RiserError::Fit(format!("row {}: not a number in column {i}", line + 2)))
        };
        out.push((parse(ti)?, parse(ci)?));
    }
    Ok(out)
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> RiserError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => RiserError::Io(io),
        other => RiserError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Reference decay drawn over the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSlope {
    /// `C e^{−rate t}`
    Exponential { rate: f64 },
    /// `C t^{−rate}`
    Polynomial { rate: f64 },
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Log-scale plot of `series` against `t`, with an optional reference curve
/// anchored at `anchor_t`.
pub fn plot_svg(
    title: &str,
    series: &[(f64, f64)],
    reference: Option<(ReferenceSlope, f64)>,
) -> String {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, y)| t.is_finite() && y > 0.0 && y.is_finite())
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    if pts.len() < 2 {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">no positive data</text>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        svg.push_str("</svg>\n");
        return svg;
    }
    let t0 = pts.first().map(|p| p.0).unwrap_or(0.0);
    let t1 = pts.last().map(|p| p.0).unwrap_or(1.0).max(t0 + f64::EPSILON);
    let (mut y0, mut y1) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.1.log10()), b.max(p.1.log10()))
        });
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y.log10() - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let _ = writeln!(
        svg,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for (label, x, y, anchor) in [
        (format!("{t0:.3}"), MARGIN, HEIGHT - MARGIN + 18.0, "start"),
        (format!("{t1:.3}"), WIDTH - MARGIN, HEIGHT - MARGIN + 18.0, "end"),
        (format!("1e{y1:.1}"), MARGIN - 4.0, MARGIN + 4.0, "end"),
        (format!("1e{y0:.1}"), MARGIN - 4.0, HEIGHT - MARGIN, "end"),
        ("t".to_string(), WIDTH / 2.0, HEIGHT - 16.0, "middle"),
    ] {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{label}</text>"#
        );
    }
    svg.push_str(&polyline(pts.iter().map(|&(t, y)| (sx(t), sy(y))), "steelblue", None));

    if let Some((slope, anchor_t)) = reference {
        let start = pts
            .iter()
            .find(|p| p.0 >= anchor_t)
            .copied()
            .unwrap_or(pts[0]);
        let curve = |t: f64| match slope {
            ReferenceSlope::Exponential { rate } => start.1 * (-rate * (t - start.0)).exp(),
            ReferenceSlope::Polynomial { rate } => {
                if start.0 > 0.0 && t > 0.0 {
                    start.1 * (t / start.0).powf(-rate)
                } else {
                    f64::NAN
                }
            }
        };
        let floor = 10f64.powf(y0);
        let refs: Vec<(f64, f64)> = (0..=100)
            .map(|i| start.0 + (t1 - start.0) * i as f64 / 100.0)
            .map(|t| (t, curve(t)))
            .filter(|&(_, y)| y.is_finite() && y >= floor)
            .map(|(t, y)| (sx(t), sy(y)))
            .collect();
        if refs.len() >= 2 {
            svg.push_str(&polyline(refs.into_iter(), "firebrick", Some("6 4")));
        }
        let label = match slope {
            ReferenceSlope::Exponential { rate } => format!("reference e^(-{rate:.4} t)"),
            ReferenceSlope::Polynomial { rate } => format!("reference t^(-{rate:.4})"),
        };
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end" fill="firebrick">{}</text>"#,
            WIDTH - MARGIN,
            MARGIN - 8.0,
            escape(&label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn polyline(points: impl Iterator<Item = (f64, f64)>, color: &str, dash: Option<&str>) -> String {
    let coords: Vec<String> = points.map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let dash = dash
        .map(|d| format!(r#" stroke-dasharray="{d}""#))
        .unwrap_or_default();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>\n",
        coords.join(" ")
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
