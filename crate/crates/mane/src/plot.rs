//! Deterministic SVG scatter plots of 2-D embeddings.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{ManeError, Result};

/// Fixed 10-color palette; labels map to colors by their position among the
/// distinct labels, modulo the palette size.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const CANVAS: f64 = 800.0;
const MARGIN: f64 = 48.0;
const LEGEND_WIDTH: f64 = 150.0;
const POINT_RADIUS: f64 = 2.0;

/// Render a self-contained SVG scatter of 2-D coordinates. Output bytes are
/// a deterministic function of the input.
pub fn render_svg(
    coords: &ArrayView2<'_, f64>,
    labels: Option<&[i64]>,
    label_names: Option<&[String]>,
) -> Result<String> {
    if coords.ncols() != 2 {
        return Err(ManeError::UnsupportedDim {
            expected: 2,
            got: coords.ncols(),
        });
    }
    if let Some(l) = labels {
        if l.len() != coords.nrows() {
            return Err(ManeError::Shape(format!(
                "{} labels for {} points",
                l.len(),
                coords.nrows()
            )));
        }
    }

    let distinct: Vec<i64> = labels
        .map(|l| l.iter().copied().collect::<BTreeSet<i64>>().into_iter().collect())
        .unwrap_or_default();
    let color_of = |label: i64| -> &'static str {
        let pos = distinct.binary_search(&label).unwrap_or(0);
        PALETTE[pos % PALETTE.len()]
    };
    let name_of = |label: i64| -> String {
        match label_names {
            Some(names) if label >= 0 && (label as usize) < names.len() => {
                names[label as usize].clone()
            }
            _ => label.to_string(),
        }
    };

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in coords.rows() {
        min_x = min_x.min(row[0]);
        max_x = max_x.max(row[0]);
        min_y = min_y.min(row[1]);
        max_y = max_y.max(row[1]);
    }
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);
    let scale = (CANVAS - 2.0 * MARGIN) / span_x.max(span_y);
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        (
            MARGIN + (x - min_x) * scale,
            // SVG y grows downward; flip so the plot reads like a chart.
            CANVAS - MARGIN - (y - min_y) * scale,
        )
    };

    let width = if distinct.len() > 1 {
        CANVAS + LEGEND_WIDTH
    } else {
        CANVAS
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{CANVAS:.0}\" \
         viewBox=\"0 0 {width:.0} {CANVAS:.0}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width:.0}\" height=\"{CANVAS:.0}\" fill=\"white\"/>\n"
    ));

    for (i, row) in coords.rows().into_iter().enumerate() {
        let (px, py) = to_px(row[0], row[1]);
        let color = match labels {
            Some(l) => color_of(l[i]),
            None => PALETTE[0],
        };
        svg.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"{POINT_RADIUS}\" fill=\"{color}\" \
             fill-opacity=\"0.65\"/>\n"
        ));
    }

    if distinct.len() > 1 {
        let x = CANVAS + 10.0;
        for (row, &label) in distinct.iter().enumerate() {
            let y = MARGIN + 20.0 * row as f64;
            svg.push_str(&format!(
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"{}\"/>\n",
                color_of(label)
            ));
            svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
                x + 12.0,
                y + 4.5,
                xml_escape(&name_of(label))
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render and write a scatter plot.
pub fn emit_plot(
    coords: &ArrayView2<'_, f64>,
    labels: Option<&[i64]>,
    label_names: Option<&[String]>,
    path: &Path,
) -> Result<()> {
    let svg = render_svg(coords, labels, label_names)?;
    std::fs::write(path, svg)?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
