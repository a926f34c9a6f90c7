use std::collections::BTreeMap;
use std::fmt::Write;

use nalgebra::DMatrix;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Static scatter of the two columns of `coords`, colored by label.
pub fn scatter(coords: &DMatrix<f64>, labels: Option<&[String]>, x_name: &str, y_name: &str) -> String {
    let (x0, x1) = span(coords.column(0).iter().copied());
    let (y0, y1) = span(coords.column(1).iter().copied());
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut colors = BTreeMap::new();
    if let Some(ls) = labels {
        for l in ls {
            let next = colors.len();
            colors.entry(l.as_str()).or_insert(PALETTE[next % PALETTE.len()]);
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_name)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_name)
    );
    for (v, x, anchor) in [(x0, left, "start"), (x1, right, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" font-size="10" text-anchor="{anchor}">{v:.3}</text>"#,
            bottom + 14.0
        );
    }
    for (v, y) in [(y0, bottom), (y1, top + 10.0)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" font-size="10" text-anchor="end">{v:.3}</text>"#,
            left - 4.0
        );
    }
    for (i, row) in coords.row_iter().enumerate() {
        let color = labels.map_or(PALETTE[0], |ls| colors[ls[i].as_str()]);
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.6"/>"#,
            sx(row[0]),
            sy(row[1])
        );
    }
    for (k, (label, color)) in colors.iter().enumerate() {
        let y = top + 14.0 * k as f64;
        let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/>"#, right - 60.0, y);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10">{}</text>"#,
            right - 52.0,
            y + 3.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
