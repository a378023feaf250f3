//! Scatter plots as plain SVG text, byte-deterministic for a given input.

use std::fmt::Write;

use qsne::Embedding64;

const SIZE: f64 = 640.0;
const RADIUS: f64 = 2.5;
/// Fraction of the data range added on each side of both axes.
const MARGIN: f64 = 0.05;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Colour for class `label`; the palette cycles for ids beyond its length.
pub fn class_color(label: i64) -> &'static str {
    PALETTE[label.rem_euclid(PALETTE.len() as i64) as usize]
}

/// `[lo, hi]` widened by the margin; a flat range becomes a unit interval.
fn axis(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    if span > 0.0 {
        (lo - MARGIN * span, hi + MARGIN * span)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Renders one circle per point. Requires a 2-D embedding.
pub fn render(embedding: &Embedding64, labels: Option<&[i64]>) -> Result<String, String> {
    if embedding.dim() != 2 {
        return Err(format!(
            "plots need a 2-D embedding, got {} dimensions",
            embedding.dim()
        ));
    }
    let n = embedding.n_points();
    let (x0, x1) = axis((0..n).map(|i| embedding.row(i)[0]));
    let (y0, y1) = axis((0..n).map(|i| embedding.row(i)[1]));

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..n {
        let p = embedding.row(i);
        let cx = (p[0] - x0) / (x1 - x0) * SIZE;
        // screen y grows downwards
        let cy = (y1 - p[1]) / (y1 - y0) * SIZE;
        let fill = class_color(labels.map_or(0, |l| l[i]));
        let _ = writeln!(
            out,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{RADIUS}" fill="{fill}" fill-opacity="0.8"/>"#
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
