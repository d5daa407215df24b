//! Scatter plot of a clustering as a standalone SVG document.

use std::fmt::Write;

use ndarray::ArrayView2;

use crate::dbscan::NOISE;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#393b79",
];

/// Plots the first two coordinates (the second is 0 for 1-D data); noise is
/// drawn in grey.
pub fn scatter_svg(points: ArrayView2<'_, f64>, assignment: &[i64]) -> String {
    let coord = |i: usize, c: usize| if c < points.ncols() { points[[i, c]] } else { 0.0 };
    let range = |c: usize| {
        (0..points.nrows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(coord(i, c)), hi.max(coord(i, c)))
        })
    };
    let scale = |v: f64, (lo, hi): (f64, f64)| {
        let span = if hi > lo { hi - lo } else { 1.0 };
        MARGIN + (v - lo) / span * (SIZE - 2.0 * MARGIN)
    };
    let (rx, ry) = (range(0), range(1));
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, &c) in assignment.iter().enumerate().take(points.nrows()) {
        let colour = if c == NOISE { "#bbbbbb" } else { PALETTE[c as usize % PALETTE.len()] };
        let x = scale(coord(i, 0), rx);
        let y = SIZE - scale(coord(i, 1), ry);
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{colour}"/>"#);
    }
    out.push_str("</svg>\n");
    out
}
