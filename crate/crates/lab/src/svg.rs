//! Standalone SVG scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use restoration_core::Samples;

use crate::LabError;

pub const SIZE: f64 = 640.0;
pub const MAX_SETS: usize = 8;

/// Fixed palette, indexed by set position.
pub const PALETTE: [&str; MAX_SETS] = [
    "#9e9e9e", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
];

/// Renders the sets into a 640×640 SVG with equal-aspect axes covering the joint
/// bounding box plus a 5% margin. One `<circle>` per point; the legend uses
/// rectangles and text only.
pub fn render_scatter(sets: &[(&Samples, &str)]) -> Result<String, LabError> {
    if sets.is_empty() {
        return Err(LabError::invalid("scatter plot needs at least one set"));
    }
    if sets.len() > MAX_SETS {
        return Err(LabError::invalid(format!("at most {MAX_SETS} sets per plot")));
    }
    let pts = sets.iter().flat_map(|(s, _)| s.points());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x1);
        x1 = x1.max(p.x1);
        y0 = y0.min(p.x2);
        y1 = y1.max(p.x2);
    }
    let mut span = (x1 - x0).max(y1 - y0);
    if span <= 0.0 {
        span = 1.0;
    }
    let span = span * 1.1;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let scale = SIZE / span;
    let map_x = |x: f64| (x - cx) * scale + SIZE / 2.0;
    let map_y = |y: f64| SIZE / 2.0 - (y - cy) * scale;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="640" viewBox="0 0 640 640">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="640" height="640" fill="white"/>"#);
    for (set, color) in sets {
        let _ = writeln!(out, r#"<g fill="{color}" fill-opacity="0.6">"#);
        for p in set.points() {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#, map_x(p.x1), map_y(p.x2));
        }
        out.push_str("</g>\n");
    }
    for (i, (set, color)) in sets.iter().enumerate() {
        let y = 12.0 + 18.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="10" y="{y}" width="10" height="10" fill="{color}"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="26" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            y + 9.0,
            escape(set.label())
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_scatter_svg(sets: &[(&Samples, &str)], path: &Path) -> Result<(), LabError> {
    let svg = render_scatter(sets)?;
    std::fs::write(path, svg).map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
