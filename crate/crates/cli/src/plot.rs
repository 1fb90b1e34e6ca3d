//! Top-view SVG of localized tracks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Point3;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 64.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// One polyline per track over the ground coordinates `(x, z)` of its
/// positions, frames in increasing order; axes are labelled in meters.
pub fn top_view_svg(tracks: &BTreeMap<i64, Vec<(usize, Point3<f64>)>>) -> String {
    let points = tracks.values().flatten().map(|(_, p)| (p.x, p.z));
    let (mut x0, mut x1, mut z0, mut z1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, z) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        z0 = z0.min(z);
        z1 = z1.max(z);
    }
    if !x0.is_finite() {
        (x0, x1, z0, z1) = (-1.0, 1.0, 0.0, 1.0);
    }
    // Equal scale on both axes, centered.
    let span = (x1 - x0).max(z1 - z0).max(1.0) * 1.05;
    let (cx, cz) = ((x0 + x1) / 2.0, (z0 + z1) / 2.0);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let px = |x: f64| MARGIN + (x - cx + span / 2.0) * scale;
    let pz = |z: f64| SIZE - MARGIN - (z - cz + span / 2.0) * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, SIZE - MARGIN, MARGIN, SIZE - MARGIN);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}"/></g>"#
    );
    let step = tick_step(span);
    let mut tick = ((cx - span / 2.0) / step).ceil() * step;
    while tick <= cx + span / 2.0 {
        let x = px(tick);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            bottom + 16.0,
            fmt_tick(tick)
        );
        tick += step;
    }
    let mut tick = ((cz - span / 2.0) / step).ceil() * step;
    while tick <= cz + span / 2.0 {
        let z = pz(tick);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{z:.2}" font-size="11" text-anchor="end">{}</text>"#,
            left - 6.0,
            fmt_tick(tick)
        );
        tick += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">x (m)</text>"#,
        SIZE / 2.0,
        SIZE - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">z (m)</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    for (i, (id, pts)) in tracks.iter().enumerate() {
        let mut pts = pts.clone();
        pts.sort_by_key(|(f, _)| *f);
        let coords: Vec<String> = pts.iter().map(|(_, p)| format!("{:.2},{:.2}", px(p.x), pz(p.z))).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-track="{id}" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            coords.join(" "),
            PALETTE[i % PALETTE.len()]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// A 1-2-5 step giving roughly five to ten ticks over `span`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

fn fmt_tick(v: f64) -> String {
    let v = if v.abs() < 1e-9 { 0.0 } else { v };
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_track() {
        let mut tracks = BTreeMap::new();
        tracks.insert(1, vec![(0, Point3::new(0.0, 0.0, 10.0)), (1, Point3::new(0.5, 0.0, 11.0))]);
        tracks.insert(4, vec![(0, Point3::new(-3.0, 0.0, 20.0))]);
        let svg = top_view_svg(&tracks);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(r#"data-track="4""#));
        assert!(svg.contains("x (m)") && svg.contains("z (m)"));
        assert_eq!(top_view_svg(&BTreeMap::new()).matches("<polyline").count(), 0);
    }

    #[test]
    fn tick_steps() {
        assert_eq!(tick_step(8.0), 1.0);
        assert_eq!(tick_step(30.0), 5.0);
        assert_eq!(tick_step(0.9), 0.2);
    }
}
