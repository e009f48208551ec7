//! Self-contained SVG charts with byte-stable output.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::sig4;

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    LossVsTokens,
    AccVsLoss,
    ErrorVsFlops,
    CurveOverlay,
}

impl PlotKind {
    pub fn log_x(self) -> bool {
        matches!(self, PlotKind::LossVsTokens | PlotKind::ErrorVsFlops)
    }

    fn labels(self) -> (&'static str, &'static str) {
        match self {
            PlotKind::LossVsTokens => ("tokens D", "task loss"),
            PlotKind::AccVsLoss => ("task loss", "accuracy"),
            PlotKind::ErrorVsFlops => ("ladder FLOPs", "relative error (%)"),
            PlotKind::CurveOverlay => ("step", "task loss"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    /// Chinchilla multiplier; picks the marker shape.
    pub multiplier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<PlotPoint>,
    /// Fitted curve drawn as a line.
    pub fit: Vec<(f64, f64)>,
}

/// Data-to-pixel transform of a chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub log_x: bool,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    pub fn new(kind: PlotKind, series: &[Series]) -> Result<Self> {
        let log_x = kind.log_x();
        let xs_ys = series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| (p.x, p.y)).chain(s.fit.iter().copied()))
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_x || *x > 0.0));
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in xs_ys {
            let x = if log_x { x.log10() } else { x };
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return Err(Error::invalid("plot needs at least one finite point"));
        }
        let widen = |lo: f64, hi: f64| {
            if hi > lo {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            } else {
                let pad = if lo == 0.0 { 0.5 } else { 0.05 * lo.abs() };
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        Ok(Self {
            log_x,
            x_min: x0,
            x_max: x1,
            y_min: y0,
            y_max: y1,
        })
    }

    /// Pixel position of a data point.
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let xv = if self.log_x { x.log10() } else { x };
        let w = WIDTH - LEFT - RIGHT;
        let h = HEIGHT - TOP - BOTTOM;
        let px = LEFT + (xv - self.x_min) / (self.x_max - self.x_min) * w;
        let py = TOP + (self.y_max - y) / (self.y_max - self.y_min) * h;
        (px, py)
    }

    fn x_ticks(&self) -> Vec<(f64, String)> {
        if self.log_x {
            let lo = self.x_min.ceil() as i32;
            let hi = self.x_max.floor() as i32;
            if hi > lo {
                return (lo..=hi).map(|k| (10f64.powi(k), format!("1e{k}"))).collect();
            }
            return [self.x_min, self.x_max]
                .iter()
                .map(|v| (10f64.powf(*v), sig4(10f64.powf(*v))))
                .collect();
        }
        linear_ticks(self.x_min, self.x_max)
    }
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    (0..5)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / 4.0;
            (v, sig4(v))
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn regular_polygon(cx: f64, cy: f64, r_outer: f64, r_inner: Option<f64>, corners: usize) -> String {
    let steps = if r_inner.is_some() { corners * 2 } else { corners };
    (0..steps)
        .map(|i| {
            let r = match r_inner {
                Some(ri) if i % 2 == 1 => ri,
                _ => r_outer,
            };
            let a = -std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::TAU / steps as f64;
            format!("{:.2},{:.2}", cx + r * a.cos(), cy + r * a.sin())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Square, plus, pentagon and star for 1, 2, 5 and 10 times the
/// compute-optimal budget; a circle otherwise.
fn marker(out: &mut String, x: f64, y: f64, multiplier: Option<f64>, color: &str) {
    let is = |m: f64| multiplier.is_some_and(|v| (v - m).abs() < 1e-9);
    let _ = if is(1.0) {
        writeln!(out, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#, x - 4.0, y - 4.0)
    } else if is(2.0) {
        writeln!(
            out,
            r#"<path d="M{:.2} {:.2}H{:.2}M{:.2} {:.2}V{:.2}" stroke="{color}" stroke-width="2.5"/>"#,
            x - 5.0,
            y,
            x + 5.0,
            x,
            y - 5.0,
            y + 5.0
        )
    } else if is(5.0) {
        writeln!(out, r#"<polygon points="{}" fill="{color}"/>"#, regular_polygon(x, y, 5.0, None, 5))
    } else if is(10.0) {
        writeln!(out, r#"<polygon points="{}" fill="{color}"/>"#, regular_polygon(x, y, 6.0, Some(2.6), 5))
    } else {
        writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/>"#)
    };
}

/// Renders the series; the x-axis is logarithmic for token and FLOPs plots.
pub fn emit_plot(title: &str, kind: PlotKind, series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty() && s.fit.is_empty()) {
        return Err(Error::invalid("plot needs a nonempty series"));
    }
    let frame = Frame::new(kind, series)?;
    let (x_label, y_label) = kind.labels();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        escape(title)
    );
    let (x_lo, y_hi) = (LEFT, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    for (v, label) in frame.x_ticks() {
        let (px, _) = frame.map(v, frame.y_min);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{y_hi:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            y_hi + 5.0,
            y_hi + 18.0
        );
    }
    for (v, label) in linear_ticks(frame.y_min, frame.y_max) {
        let (_, py) = frame.map(if frame.log_x { 10f64.powf(frame.x_min) } else { frame.x_min }, v);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x_lo:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            x_lo - 5.0,
            x_lo - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{y_label}</text>"#,
        (HEIGHT - BOTTOM + TOP) / 2.0,
        (HEIGHT - BOTTOM + TOP) / 2.0
    );
    let usable = |x: f64, y: f64| x.is_finite() && y.is_finite() && (!frame.log_x || x > 0.0);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let line: Vec<String> = s
            .fit
            .iter()
            .filter(|(x, y)| usable(*x, *y))
            .map(|&(x, y)| {
                let (px, py) = frame.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        if line.len() > 1 {
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
        for p in s.points.iter().filter(|p| usable(p.x, p.y)) {
            let (px, py) = frame.map(p.x, p.y);
            marker(&mut out, px, py, p.multiplier, color);
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_series() -> Vec<Series> {
        vec![Series {
            name: "a & b".into(),
            points: [(1e9, 1.2, 1.0), (2e9, 1.1, 2.0), (5e9, 1.0, 5.0), (1e10, 0.95, 10.0), (3e10, 0.9, 20.0)]
                .iter()
                .map(|&(x, y, m)| PlotPoint {
                    x,
                    y,
                    multiplier: Some(m),
                })
                .collect(),
            fit: vec![(1e9, 1.21), (3e10, 0.89)],
        }]
    }

    #[test]
    fn output_is_well_formed_xml() {
        let svg = emit_plot("t <1>", PlotKind::LossVsTokens, &one_series()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(svg.contains("a &amp; b"));
    }

    #[test]
    fn extreme_points_map_inside_plot_area() {
        let s = one_series();
        let f = Frame::new(PlotKind::LossVsTokens, &s).unwrap();
        // recompute the transform: log10 range padded by 5%
        let (lo, hi) = (9.0f64, 3e10f64.log10());
        let pad = 0.05 * (hi - lo);
        let want = LEFT + (hi - (lo - pad)) / ((hi + pad) - (lo - pad)) * (WIDTH - LEFT - RIGHT);
        let (px, py) = f.map(3e10, 0.9);
        assert!((px - want).abs() < 1e-9);
        assert!(px > 0.0 && px < WIDTH && py > 0.0 && py < HEIGHT);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(emit_plot("t", PlotKind::AccVsLoss, &[]).is_err());
    }

    #[test]
    fn repeated_calls_agree() {
        let a = emit_plot("t", PlotKind::CurveOverlay, &one_series()).unwrap();
        assert_eq!(a, emit_plot("t", PlotKind::CurveOverlay, &one_series()).unwrap());
    }
}
