//! Minimal SVG scatter plots coloured by label.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::points::Points;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 24.0;
const RADIUS: f64 = 2.0;
const NOISE_COLOR: &str = "#9e9e9e";
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn color(label: i64) -> &'static str {
    if label < 0 {
        NOISE_COLOR
    } else {
        PALETTE[label as usize % PALETTE.len()]
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot of the first two coordinates (one-dimensional data is drawn
/// on a horizontal line). Negative labels are drawn grey.
pub fn scatter_svg(points: &Points, labels: &[i64], title: Option<&str>) -> Result<String> {
    if labels.len() != points.len() {
        return Err(Error::invalid("one label per point required"));
    }
    let xy = |i: usize| {
        let r = points.row(i);
        (r[0], if r.len() > 1 { r[1] } else { 0.0 })
    };
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..points.len() {
        let (x, y) = xy(i);
        lo_x = lo_x.min(x);
        hi_x = hi_x.max(x);
        lo_y = lo_y.min(y);
        hi_y = hi_y.max(y);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = (span(lo_x, hi_x), span(lo_y, hi_y));
    let inner = SIZE - 2.0 * MARGIN;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(t) = title {
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="12">{}</text>"#,
            MARGIN * 0.7,
            escape(t)
        );
    }
    for (i, &l) in labels.iter().enumerate() {
        let (x, y) = xy(i);
        let px = MARGIN + (x - lo_x) / sx * inner;
        let py = SIZE - MARGIN - (y - lo_y) / sy * inner;
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="{RADIUS}" fill="{}"/>"#,
            color(l)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
