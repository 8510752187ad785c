//! Minimal deterministic SVG line plots: one panel per (λ, metric) pair,
//! one polyline per flow.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::run::{read_trajectory_csv, Trajectory};
use crate::error::{Error, Result};

pub const METRICS: [&str; 3] = ["mean_err", "cov_rel_err", "cos_err"];

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const LEGEND_H: f64 = 28.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YScale {
    Linear,
    Log,
}

fn lambda_key(t: &Trajectory) -> String {
    t.lambda.map(|l| format!("λ = {l}")).unwrap_or_else(|| "no λ".to_string())
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the trajectories to an SVG document.
pub fn render_svg(trajs: &[Trajectory], scale: YScale) -> Result<String> {
    if trajs.is_empty() || trajs.iter().any(|t| t.rows.is_empty()) {
        return Err(Error::Format("nothing to plot".into()));
    }
    let mut lambdas: Vec<(Option<f64>, String)> = Vec::new();
    for t in trajs {
        if !lambdas.iter().any(|(l, _)| *l == t.lambda) {
            lambdas.push((t.lambda, lambda_key(t)));
        }
    }
    lambdas.sort_by(|a, b| match (a.0, b.0) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let flows: Vec<String> = trajs
        .iter()
        .map(|t| t.flow.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cell_w = MARGIN_L + PANEL_W + MARGIN_R;
    let cell_h = MARGIN_T + PANEL_H + MARGIN_B;
    let width = cell_w * METRICS.len() as f64;
    let height = LEGEND_H + cell_h * lambdas.len() as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, f) in flows.iter().enumerate() {
        let x = 10.0 + 150.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="14" x2="{:.1}" y2="14" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="18">{}</text>"#,
            x + 22.0,
            x + 28.0,
            esc(f)
        );
    }

    for (row, (lambda, label)) in lambdas.iter().enumerate() {
        for (col, metric) in METRICS.iter().enumerate() {
            let x0 = col as f64 * cell_w + MARGIN_L;
            let y0 = LEGEND_H + row as f64 * cell_h + MARGIN_T;
            let series: Vec<(usize, Vec<(f64, f64)>)> = trajs
                .iter()
                .filter(|t| t.lambda == *lambda)
                .map(|t| {
                    let ys = t.metric(metric).expect("known metric");
                    let pts = t
                        .times()
                        .into_iter()
                        .zip(ys)
                        .filter(|(_, y)| y.is_finite() && (scale == YScale::Linear || *y > 0.0))
                        .map(|(x, y)| (x, if scale == YScale::Log { y.log10() } else { y }))
                        .collect();
                    (flows.iter().position(|f| *f == t.flow).expect("flow listed"), pts)
                })
                .collect();
            let all = series.iter().flat_map(|(_, p)| p.iter());
            let (mut xmin, mut xmax, mut ymin, mut ymax) =
                (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for &(x, y) in all {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
            if !xmin.is_finite() {
                (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
            }
            if scale == YScale::Log {
                ymin = ymin.floor();
                ymax = ymax.ceil();
            }
            if xmax - xmin < 1e-12 {
                xmax = xmin + 1.0;
            }
            if ymax - ymin < 1e-12 {
                ymax = ymin + 1.0;
            }
            let sx = |x: f64| x0 + (x - xmin) / (xmax - xmin) * PANEL_W;
            let sy = |y: f64| y0 + PANEL_H - (y - ymin) / (ymax - ymin) * PANEL_H;

            let _ = writeln!(
                svg,
                r##"<rect x="{x0:.1}" y="{y0:.1}" width="{PANEL_W:.1}" height="{PANEL_H:.1}" fill="none" stroke="#444"/>"##
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{} ({})</text>"#,
                x0 + PANEL_W / 2.0,
                y0 - 8.0,
                metric,
                esc(label)
            );
            for k in 0..=4 {
                let fx = xmin + (xmax - xmin) * k as f64 / 4.0;
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                    sx(fx),
                    y0 + PANEL_H + 14.0,
                    fmt_num(fx)
                );
                let fy = ymin + (ymax - ymin) * k as f64 / 4.0;
                let tick = match scale {
                    YScale::Log => format!("1e{}", fmt_num(fy)),
                    YScale::Linear => fmt_num(fy),
                };
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                    x0 - 4.0,
                    sy(fy) + 4.0,
                    tick
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t</text>"#,
                x0 + PANEL_W / 2.0,
                y0 + PANEL_H + 30.0
            );
            for (idx, pts) in &series {
                if pts.is_empty() {
                    continue;
                }
                let mut path = String::new();
                for (i, (x, y)) in pts.iter().enumerate() {
                    if i > 0 {
                        path.push(' ');
                    }
                    let _ = write!(path, "{:.2},{:.2}", sx(*x), sy(*y));
                }
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{path}"/>"#,
                    PALETTE[idx % PALETTE.len()]
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads every CSV, renders, and writes `output`. Nothing is written on error.
pub fn emit_plot(csv_paths: &[impl AsRef<Path>], output: &Path, scale: YScale) -> Result<()> {
    if csv_paths.is_empty() {
        return Err(Error::Format("no input files".into()));
    }
    let trajs = csv_paths
        .iter()
        .map(|p| read_trajectory_csv(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let svg = render_svg(&trajs, scale)?;
    std::fs::write(output, svg)?;
    Ok(())
}
