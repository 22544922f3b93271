//! Minimal SVG line charts from the CSV files the binary writes.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use sparsense::harness::{parse_metrics_csv, CSV_HEADER};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 58.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

/// Reads either the aggregated metrics CSV (one series per algorithm, `metric`
/// on the y axis) or a wide table (first column on the x axis, one series per
/// remaining column whose name contains any of `columns`, all when empty).
/// Returns the series and the x-axis label.
pub fn series_from_csv(text: &str, metric: &str, columns: &[String]) -> Result<(Vec<Series>, String)> {
    let header = text.lines().next().context("CSV is empty")?;
    if header == CSV_HEADER {
        let rows = parse_metrics_csv(text)?;
        let mut series: Vec<Series> = Vec::new();
        for r in rows {
            let y = match metric {
                "prob_recovery" => r.prob_recovery,
                "mse" => r.mse,
                "mean_iterations" => r.mean_iterations,
                other => bail!("unknown metric `{other}` (expected prob_recovery|mse|mean_iterations)"),
            };
            let name = r.algorithm.to_string();
            match series.iter_mut().find(|s| s.name == name) {
                Some(s) => s.points.push((r.grid, y)),
                None => series.push(Series {
                    name,
                    points: vec![(r.grid, y)],
                }),
            }
        }
        return Ok((series, "grid".into()));
    }

    let names: Vec<&str> = header.split(',').collect();
    if names.len() < 2 {
        bail!("CSV needs at least two columns");
    }
    let keep: Vec<usize> = (1..names.len())
        .filter(|&i| columns.is_empty() || columns.iter().any(|c| names[i].contains(c.as_str())))
        .collect();
    if keep.is_empty() {
        bail!("no column matches {columns:?}");
    }
    let mut series: Vec<Series> = keep
        .iter()
        .map(|&i| Series {
            name: names[i].to_string(),
            points: Vec::new(),
        })
        .collect();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            bail!("line {}: expected {} fields, got {}", lineno + 1, names.len(), cells.len());
        }
        let parse = |s: &str| -> Result<f64> {
            match s {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => s.parse().with_context(|| format!("line {}: `{s}` is not a number", lineno + 1)),
            }
        };
        let x = parse(cells[0])?;
        for (s, &i) in series.iter_mut().zip(&keep) {
            s.points.push((x, parse(cells[i])?));
        }
    }
    Ok((series, names[0].to_string()))
}

/// Tick positions at 1, 2 or 5 times a power of ten.
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `series` as a standalone SVG document. Non-finite points, and
/// nonpositive ones on a log axis, are skipped.
pub fn render_svg(series: &[Series], spec: &PlotSpec) -> Result<String> {
    let usable = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!spec.log_y || y > 0.0);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied().filter(usable)).collect();
    if all.is_empty() {
        bail!("nothing to plot");
    }
    let ty = |y: f64| if spec.log_y { y.log10() } else { y };
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(ty(p.1)), b.max(ty(p.1))));
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if spec.log_y {
        y0 = y0.floor();
        y1 = y1.ceil();
        if y1 == y0 {
            y1 += 1.0;
        }
    } else {
        let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5 };
        y0 -= pad;
        y1 += pad;
    }

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (ty(y) - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&spec.title)
    );

    for t in nice_ticks(x0, x1, 8) {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e5e5e5"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 18.0,
            tick_label(t)
        );
    }
    let y_ticks: Vec<(f64, String)> = if spec.log_y {
        (y0 as i64..=y1 as i64).map(|e| (e as f64, format!("1e{e}"))).collect()
    } else {
        nice_ticks(y0, y1, 6).into_iter().map(|t| (t, tick_label(t))).collect()
    };
    for (t, label) in y_ticks {
        let y = TOP + ph - (t - y0) / (y1 - y0) * ph;
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(usable).collect();
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                path.join(" ")
            );
        }
        for &(x, y) in &pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
