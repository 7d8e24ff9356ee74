//! Two-series line chart of a sweep with a horizontal reference line.

use std::fmt::Write;

use scenario_jsr::consensus::SweepRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn polyline(out: &mut String, points: &[(f64, f64)], color: &str) {
    if points.is_empty() {
        return;
    }
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" ")).unwrap();
    for (x, y) in points {
        writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#).unwrap();
    }
}

pub fn sweep_chart(rows: &[SweepRow]) -> String {
    let reference = rows.first().map(|r| r.whitebox_upper).unwrap_or(0.0);
    let values = rows.iter().flat_map(|r| [r.bound1, r.bound2]).flatten().chain([reference]);
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let (n_lo, n_hi) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if b.samples > a.samples => (a.samples as f64, b.samples as f64),
        (Some(a), _) => (a.samples as f64 - 1.0, a.samples as f64 + 1.0),
        _ => (0.0, 1.0),
    };
    let sx = |n: f64| MARGIN + (n - n_lo) / (n_hi - n_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    writeln!(out, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#).unwrap();
    for r in rows {
        let x = sx(r.samples as f64);
        writeln!(out, r#"<text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#, y0 + 18.0, r.samples).unwrap();
    }
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{v:.3}</text>"#, x0 - 6.0, sy(v) + 4.0).unwrap();
    }
    writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">N</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0).unwrap();

    let ry = sy(reference);
    writeln!(out, r#"<line x1="{x0}" y1="{ry:.2}" x2="{x1}" y2="{ry:.2}" stroke="gray" stroke-dasharray="8,4,2,4"/>"#).unwrap();
    let series = |pick: fn(&SweepRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter_map(|r| pick(r).map(|v| (sx(r.samples as f64), sy(v)))).collect()
    };
    polyline(&mut out, &series(|r| r.bound1), "#1f77b4");
    polyline(&mut out, &series(|r| r.bound2), "#d62728");

    let legend = [("#1f77b4", "bound 1"), ("#d62728", "bound 2"), ("gray", "white-box upper")];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = MARGIN + 4.0 + 18.0 * i as f64;
        writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#, x1 - 150.0, x1 - 124.0).unwrap();
        writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="12">{label}</text>"#, x1 - 118.0, y + 4.0).unwrap();
    }
    out.push_str("</svg>\n");
    out
}
