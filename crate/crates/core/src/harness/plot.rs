//! Static log-log convergence plots as SVG.
//!
//! Output depends only on the input values: coordinates are printed with a
//! fixed precision and consecutive points that round to the same pixel are
//! dropped.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::optim::IterateTrace;
use crate::scalar::Scalar;

/// Suboptimality values below this are drawn at this value.
pub const SUBOPT_FLOOR: f64 = 1e-12;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

/// One polyline: `(k, suboptimality)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(usize, f64)>,
    pub divergent: bool,
}

impl Series {
    /// Mean suboptimality over `traces` at every `k` reached by all of them.
    /// Divergent if any trace is.
    pub fn mean<T: Scalar>(label: impl Into<String>, traces: &[IterateTrace<T>]) -> Self {
        let len = traces.iter().map(IterateTrace::len).min().unwrap_or(0);
        let n = traces.len().max(1) as f64;
        let points = (0..len)
            .map(|k| {
                let s: f64 = traces.iter().map(|t| t.records[k].subopt.as_f64()).sum();
                (traces[0].records[k].k, s / n)
            })
            .collect();
        Self {
            label: label.into(),
            points,
            divergent: traces.iter().any(|t| t.divergent),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn clip(v: f64) -> f64 {
    if v < SUBOPT_FLOOR {
        SUBOPT_FLOOR
    } else {
        v
    }
}

/// Renders `series` on log-log axes (k from 1; `k = 0` has no log
/// coordinate and is skipped). Non-finite values end a polyline; divergent
/// series get a cross at their last finite point and a note in the legend.
pub fn plot_loglog(series: &[Series], title: &str) -> Result<String> {
    if series.is_empty() {
        return Err(Error::invalid("nothing to plot"));
    }
    let usable = |s: &Series| -> Vec<(f64, f64)> {
        s.points
            .iter()
            .filter(|(k, _)| *k >= 1)
            .take_while(|(_, v)| v.is_finite())
            .map(|&(k, v)| ((k as f64).log10(), clip(v).log10()))
            .collect()
    };
    let lines: Vec<Vec<(f64, f64)>> = series.iter().map(usable).collect();
    let all = lines.iter().flatten();
    let x_max = all.clone().map(|p| p.0).fold(1.0_f64, f64::max).ceil();
    let (mut y_lo, mut y_hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.1), hi.max(p.1))
    });
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (-1.0, 1.0);
    }
    let (mut y_lo, mut y_hi) = (y_lo.floor(), y_hi.ceil());
    if y_hi - y_lo < 1.0 {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + pw * x / x_max;
    let py = |y: f64| TOP + ph * (y_hi - y) / (y_hi - y_lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    // Grid and tick labels at every decade.
    for d in 0..=(x_max as i32) {
        let x = px(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            TOP,
            TOP + ph
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"#,
            TOP + ph + 16.0
        );
    }
    for d in (y_lo as i32)..=(y_hi as i32) {
        let y = py(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration k</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">f(x_k) - f*</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, (s, line)) in series.iter().zip(&lines).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut coords: Vec<(String, String)> = Vec::with_capacity(line.len());
        for &(x, y) in line {
            let c = (format!("{:.2}", px(x)), format!("{:.2}", py(y)));
            if coords.last() != Some(&c) {
                coords.push(c);
            }
        }
        if let [(cx, cy)] = coords.as_slice() {
            // A lone point still needs a visible mark.
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2" fill="{color}"/>"#);
        } else if !coords.is_empty() {
            let pts: Vec<String> = coords.iter().map(|(x, y)| format!("{x},{y}")).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        if s.divergent {
            if let Some(&(x, y)) = line.last() {
                let (cx, cy) = (px(x), py(y));
                let _ = writeln!(
                    svg,
                    r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}" stroke-width="2"/>"#,
                    cx - 5.0,
                    cy - 5.0,
                    cx + 5.0,
                    cy + 5.0,
                    cx - 5.0,
                    cy + 5.0,
                    cx + 5.0,
                    cy - 5.0
                );
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let note = if s.divergent { " (diverged)" } else { "" };
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}{note}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
