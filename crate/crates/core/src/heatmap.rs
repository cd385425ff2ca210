//! Deterministic SVG heatmaps of a reordered matrix.

use std::collections::BTreeMap;
use std::fmt::Write;

use ndarray::Array2;

use crate::error::{check_len, Error, Result};
use crate::matrix::is_permutation;

/// Color of the smallest value.
pub const RAMP_MIN: &str = "#FFFFCC";
/// Color of the largest value.
pub const RAMP_MAX: &str = "#800026";

/// Colors cycled through for the categories of an annotation track, in order
/// of first appearance along the columns.
pub const CATEGORY_COLORS: [&str; 10] = [
    "#4E79A7", "#F28E2B", "#E15759", "#76B7B2", "#59A14F", "#EDC948", "#B07AA1", "#FF9DA7", "#9C755F", "#BAB0AC",
];

/// A categorical label per column, drawn as a strip under the matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub name: String,
    pub labels: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatmapStyle {
    pub cell_width: f64,
    pub cell_height: f64,
    pub track_height: f64,
}

impl Default for HeatmapStyle {
    fn default() -> Self {
        Self {
            cell_width: 4.0,
            cell_height: 4.0,
            track_height: 8.0,
        }
    }
}

fn parse_hex(hex: &str) -> [f64; 3] {
    let v = u32::from_str_radix(&hex[1..], 16).expect("valid ramp color");
    [(v >> 16) as f64, ((v >> 8) & 0xff) as f64, (v & 0xff) as f64]
}

/// Linear interpolation between [`RAMP_MIN`] and [`RAMP_MAX`] for `t ∈ [0, 1]`.
pub fn ramp_color(t: f64) -> String {
    let (a, b) = (parse_hex(RAMP_MIN), parse_hex(RAMP_MAX));
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let c: Vec<u8> = (0..3).map(|i| (a[i] + t * (b[i] - a[i])).round() as u8).collect();
    format!("#{:02X}{:02X}{:02X}", c[0], c[1], c[2])
}

/// Renders `z` with rows in `row_order` and columns in `col_order`.
pub fn heatmap_svg(
    z: &Array2<f64>,
    row_order: &[usize],
    col_order: &[usize],
    annotations: &[Annotation],
    style: &HeatmapStyle,
) -> Result<String> {
    check_len(z.nrows(), row_order.len())?;
    check_len(z.ncols(), col_order.len())?;
    if !is_permutation(row_order, z.nrows()) || !is_permutation(col_order, z.ncols()) {
        return Err(Error::InvalidInput("leaf orders must be permutations".into()));
    }
    for a in annotations {
        check_len(z.ncols(), a.labels.len())?;
    }
    let (lo, hi) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    let width = style.cell_width * z.ncols() as f64;
    let matrix_height = style.cell_height * z.nrows() as f64;
    let height = matrix_height + style.track_height * annotations.len() as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" shape-rendering="crispEdges">"#
    );
    for (r, &i) in row_order.iter().enumerate() {
        for (c, &j) in col_order.iter().enumerate() {
            let t = if span > 0.0 { (z[[i, j]] - lo) / span } else { 0.0 };
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                c as f64 * style.cell_width,
                r as f64 * style.cell_height,
                style.cell_width,
                style.cell_height,
                ramp_color(t)
            );
        }
    }
    for (k, a) in annotations.iter().enumerate() {
        let y = matrix_height + k as f64 * style.track_height;
        let _ = writeln!(svg, r#"<g class="track"><title>{}</title>"#, escape(&a.name));
        let mut colors: BTreeMap<&str, &str> = BTreeMap::new();
        for &j in col_order {
            let n = colors.len();
            colors
                .entry(&a.labels[j])
                .or_insert(CATEGORY_COLORS[n % CATEGORY_COLORS.len()]);
        }
        for (c, &j) in col_order.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{y}" width="{}" height="{}" fill="{}"/>"#,
                c as f64 * style.cell_width,
                style.cell_width,
                style.track_height,
                colors[a.labels[j].as_str()]
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
