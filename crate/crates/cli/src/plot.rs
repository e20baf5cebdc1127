//! Static SVG scatter plots of 2-D embeddings.

use std::fmt::Write;

use udrn::{Error, Matrix, Result};

/// Tableau-10, cycled for more classes.
pub const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

const SIZE: f64 = 640.0;
const MARGIN: f64 = 40.0;
const LEGEND_WIDTH: f64 = 140.0;

pub struct ScatterSpec<'a> {
    pub points: &'a Matrix,
    pub labels: Option<&'a [usize]>,
    pub class_names: &'a [String],
    pub point_size: f64,
}

pub fn color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

pub fn render_svg(spec: &ScatterSpec) -> Result<String> {
    let z = spec.points;
    if z.rows() == 0 {
        return Err(Error::data("empty embedding: nothing to plot"));
    }
    if z.cols() != 2 {
        return Err(Error::contract(format!("scatter plots need a 2-column embedding, got {}", z.cols())));
    }
    if let Some(l) = spec.labels {
        if l.len() != z.rows() {
            return Err(Error::contract(format!("{} labels for {} points", l.len(), z.rows())));
        }
    }
    if !z.is_finite() {
        return Err(Error::data("embedding contains non-finite coordinates"));
    }
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for row in z.iter_rows() {
        for c in 0..2 {
            lo[c] = lo[c].min(row[c]);
            hi[c] = hi[c].max(row[c]);
        }
    }
    let span: Vec<f64> = (0..2).map(|c| (hi[c] - lo[c]).max(1e-12)).collect();
    let inner = SIZE - 2.0 * MARGIN;
    let classes: Vec<usize> = match spec.labels {
        Some(l) => {
            let mut c = l.to_vec();
            c.sort_unstable();
            c.dedup();
            c
        }
        None => Vec::new(),
    };
    let width = if classes.is_empty() { SIZE } else { SIZE + LEGEND_WIDTH };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{SIZE}" viewBox="0 0 {width} {SIZE}">"#
    )
    .unwrap();
    writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##).unwrap();
    writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="#cccccc"/>"##
    )
    .unwrap();
    writeln!(s, r#"<g fill-opacity="0.8">"#).unwrap();
    for (i, row) in z.iter_rows().enumerate() {
        let px = MARGIN + (row[0] - lo[0]) / span[0] * inner;
        let py = SIZE - MARGIN - (row[1] - lo[1]) / span[1] * inner;
        let fill = spec.labels.map_or(PALETTE[0], |l| color(l[i]));
        writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="{}" fill="{fill}"/>"#, spec.point_size).unwrap();
    }
    writeln!(s, "</g>").unwrap();
    if !classes.is_empty() {
        writeln!(s, r#"<g class="legend" font-family="sans-serif" font-size="12">"#).unwrap();
        for (row, &c) in classes.iter().enumerate() {
            let y = MARGIN + 10.0 + 20.0 * row as f64;
            let x = SIZE + 10.0;
            let name = spec.class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            writeln!(s, r#"<circle cx="{x}" cy="{y}" r="5" fill="{}"/>"#, color(c)).unwrap();
            writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 12.0, y + 4.0, escape(&name)).unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
