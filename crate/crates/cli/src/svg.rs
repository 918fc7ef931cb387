//! Minimal static SVG histograms.

use std::fmt::Write as _;

use dmlfair::fairmetrics::Histogram;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 8] = [
    "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overlaid histograms sharing bin edges, one translucent series per label.
pub fn histograms(title: &str, series: &[(String, Histogram)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    let Some((_, first)) = series.first() else {
        out.push_str("</svg>\n");
        return out;
    };
    let (lo, hi) = (first.edges[0], *first.edges.last().unwrap());
    let max = series
        .iter()
        .flat_map(|(_, h)| h.counts.iter().copied())
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let x = |v: f64| PAD + (v - lo) / (hi - lo) * (W - 2.0 * PAD);
    let y = |c: f64| H - PAD - c / max * (H - 2.0 * PAD);
    let _ = writeln!(
        out,
        r##"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="#333"/>"##,
        H - PAD,
        W - PAD
    );
    for (i, (label, h)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for (b, &c) in h.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (x0, x1) = (x(h.edges[b]), x(h.edges[b + 1]));
            let top = y(c as f64);
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.5"/>"#,
                (x1 - x0).max(0.5),
                H - PAD - top
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD - 140.0,
            40.0 + 16.0 * i as f64,
            esc(label)
        );
    }
    for v in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{v:.2}</text>"#,
            x(v),
            H - PAD + 16.0
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{max}</text>"#, PAD - 4.0, PAD + 4.0);
    out.push_str("</svg>\n");
    out
}
