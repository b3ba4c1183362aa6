//! Minimal static SVG line charts for the plot-data CSVs.

use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub enum Layer {
    /// Polyline; `None` breaks the line.
    Line {
        points: Vec<Option<(f64, f64)>>,
        color: &'static str,
        width: f64,
        dashed: bool,
    },
    Points {
        points: Vec<(f64, f64)>,
        color: &'static str,
    },
    VLine {
        x: f64,
        color: &'static str,
    },
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub layers: Vec<Layer>,
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            layers: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Line { points, .. } => {
                    for &(x, y) in points.iter().flatten() {
                        xs.push(x);
                        ys.push(y);
                    }
                }
                Layer::Points { points, .. } => {
                    for &(x, y) in points {
                        xs.push(x);
                        ys.push(y);
                    }
                }
                Layer::VLine { x, .. } => xs.push(*x),
            }
        }
        let (x0, x1) = bounds(xs.into_iter()).unwrap_or((0.0, 1.0));
        let (y0, y1) = bounds(ys.into_iter()).unwrap_or((0.0, 1.0));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (x, y) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(x),
                HEIGHT - BOTTOM + 18.0,
                label(x)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                sy(y) + 4.0,
                label(y)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for layer in &self.layers {
            match layer {
                Layer::Line {
                    points,
                    color,
                    width,
                    dashed,
                } => {
                    let dash = if *dashed { r#" stroke-dasharray="5,4""# } else { "" };
                    for run in points.split(|p| p.is_none()) {
                        if run.len() < 2 {
                            continue;
                        }
                        let coords: Vec<String> = run
                            .iter()
                            .flatten()
                            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                            .collect();
                        let _ = writeln!(
                            svg,
                            r#"<polyline fill="none" stroke="{color}" stroke-width="{width}"{dash} points="{}"/>"#,
                            coords.join(" ")
                        );
                    }
                }
                Layer::Points { points, color } => {
                    for &(x, y) in points {
                        let _ = writeln!(
                            svg,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{color}"/>"#,
                            sx(x),
                            sy(y)
                        );
                    }
                }
                Layer::VLine { x, color } => {
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{0:.2}" x2="{0:.2}" y1="{TOP}" y2="{1:.2}" stroke="{color}" stroke-dasharray="3,3"/>"#,
                        sx(*x),
                        TOP + ph
                    );
                }
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}
