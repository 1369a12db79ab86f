//! Minimal self-contained SVG scatter plots: one `<circle>` per point, a
//! single `<path>` (the fitted curve when a report is given, otherwise a
//! polyline through the data) and a vertical marker at `p_c`.

use std::fmt::Write as _;
use std::path::Path;

use crate::detect::TransitionReport;
use crate::error::{Error, Result};

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 420.0;
pub const MARGIN_LEFT: f64 = 70.0;
pub const MARGIN_RIGHT: f64 = 20.0;
pub const MARGIN_TOP: f64 = 30.0;
pub const MARGIN_BOTTOM: f64 = 50.0;
/// Fraction of the data span added on each side of both axes.
pub const PAD_FRACTION: f64 = 0.05;
const CURVE_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub fit: Option<TransitionReport>,
    /// Written as a leading comment when present.
    pub timestamp: Option<String>,
}

/// Data-to-pixel mapping of the plot area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span > 0.0 {
        (lo - PAD_FRACTION * span, hi + PAD_FRACTION * span)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

impl Frame {
    /// Bounds of the data (and `p_c`, when a fit is present), padded.
    pub fn fit_to(data: &PlotData) -> Self {
        let mut xs: Vec<f64> = data.x.clone();
        if let Some(f) = &data.fit {
            xs.push(f.p_c);
        }
        let (x_min, x_max) = padded(
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        let (y_min, y_max) = padded(
            data.y.iter().copied().fold(f64::INFINITY, f64::min),
            data.y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        Frame { x_min, x_max, y_min, y_max }
    }

    pub fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(data: &PlotData) -> Result<String> {
    if data.x.is_empty() || data.x.len() != data.y.len() {
        return Err(Error::EmptySeries);
    }
    let frame = Frame::fit_to(data);
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let mut s = String::new();
    if let Some(ts) = &data.timestamp {
        let _ = writeln!(s, "<!-- generated {} -->", escape(ts));
    }
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&data.title));
    let _ = writeln!(s, r#"<line class="axis" x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line class="axis" x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    for (v, anchor) in [(frame.x_min, "start"), (frame.x_max, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="{anchor}">{v:.3}</text>"#,
            frame.px(v),
            bottom + 16.0
        );
    }
    for v in [frame.y_min, frame.y_max] {
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{v:.3}</text>"#,
            left - 6.0,
            frame.py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 12.0,
        escape(&data.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.3}" text-anchor="middle" transform="rotate(-90 16 {:.3})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(&data.y_label)
    );

    let mut d = String::new();
    match &data.fit {
        Some(f) => {
            for i in 0..CURVE_SAMPLES {
                let x = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / (CURVE_SAMPLES - 1) as f64;
                let y = f.amplitude * ((x - f.p_c) / f.width).tanh() + f.offset;
                let _ = write!(d, "{}{:.3},{:.3} ", if i == 0 { 'M' } else { 'L' }, frame.px(x), frame.py(y));
            }
        }
        None => {
            for (i, (&x, &y)) in data.x.iter().zip(&data.y).enumerate() {
                let _ = write!(d, "{}{:.3},{:.3} ", if i == 0 { 'M' } else { 'L' }, frame.px(x), frame.py(y));
            }
        }
    }
    let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, d.trim_end());
    for (&x, &y) in data.x.iter().zip(&data.y) {
        let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="black"/>"#, frame.px(x), frame.py(y));
    }
    if let Some(f) = &data.fit {
        let x = frame.px(f.p_c);
        let _ = writeln!(
            s,
            r#"<line class="pc-marker" x1="{x:.3}" y1="{top}" x2="{x:.3}" y2="{bottom}" stroke="firebrick" stroke-dasharray="4 3"/>"#
        );
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" fill="firebrick">p_c = {:.4}</text>"#, x + 4.0, top + 12.0, f.p_c);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(data: &PlotData, path: &Path) -> Result<()> {
    let svg = render_svg(data)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Method;

    fn data(n: usize) -> PlotData {
        PlotData {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            x: (0..n).map(|i| i as f64).collect(),
            y: (0..n).map(|i| (i as f64).sin()).collect(),
            fit: None,
            timestamp: None,
        }
    }

    #[test]
    fn five_points() {
        let svg = render_svg(&data(5)).unwrap();
        assert_eq!(svg.matches("<circle").count(), 5);
        assert_eq!(svg.matches("<path").count(), 1);
    }

    #[test]
    fn empty_series() {
        assert!(matches!(render_svg(&data(0)), Err(Error::EmptySeries)));
    }

    #[test]
    fn timestamp_only_in_comment() {
        let mut d = data(3);
        let plain = render_svg(&d).unwrap();
        d.timestamp = Some("2026-01-01T00:00:00Z".into());
        let stamped = render_svg(&d).unwrap();
        assert_eq!(stamped.lines().skip(1).collect::<Vec<_>>(), plain.lines().collect::<Vec<_>>());
    }

    #[test]
    fn fit_curve_replaces_polyline() {
        let mut d = data(6);
        d.fit = Some(TransitionReport {
            method: Method::TanhFit,
            p_c: 2.5,
            width: 0.5,
            amplitude: 1.0,
            offset: 0.0,
            p_c_stderr: 0.0,
            p_c_fit_stderr: None,
            fit_rss: 0.0,
            n_bootstrap: 0,
            n_bootstrap_failed: 0,
            iterations: 0,
        });
        let svg = render_svg(&d).unwrap();
        assert_eq!(svg.matches("<path").count(), 1);
        assert_eq!(svg.matches("pc-marker").count(), 1);
    }
}
