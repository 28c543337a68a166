//! Minimal self-contained SVG charts.

use std::fmt::Write;

use crate::files::TOOL_VERSION;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(out: &mut String, title: &str, meta: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, "<!-- scr {TOOL_VERSION} {} -->", escape(meta));
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
}

/// Axis range with a little head room; always includes zero.
fn y_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    (lo, hi + 0.05 * (hi - lo))
}

fn axes(out: &mut String, lo: f64, hi: f64, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y0 - (y0 - y1) * k as f64 / 4.0;
        let _ = writeln!(out, r##"<line x1="{}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/>"##, x0 + 1.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 5.0, y + 4.0, tick(v));
    }
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn to_y(v: f64, lo: f64, hi: f64) -> f64 {
    (H - BOTTOM) - (H - BOTTOM - TOP) * (v - lo) / (hi - lo)
}

pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)], meta: &str) -> String {
    let mut out = String::new();
    open(&mut out, title, meta);
    let (lo, hi) = y_range(bars.iter().map(|b| b.1));
    axes(&mut out, lo, hi, y_label);
    let slot = (W - RIGHT - LEFT) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * (i as f64 + 0.15);
        let (ya, yb) = (to_y(v.max(lo), lo, hi), to_y(0.0f64.max(lo), lo, hi));
        if v.is_finite() {
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                ya.min(yb),
                slot * 0.7,
                (yb - ya).abs(),
                PALETTE[i % PALETTE.len()]
            );
        }
        let cx = x + slot * 0.35;
        let _ = writeln!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, H - BOTTOM + 16.0, escape(label));
        let _ = writeln!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ya.min(yb) - 4.0, tick(*v));
    }
    out.push_str("</svg>\n");
    out
}

/// One polyline per series over shared x labels; `None` points are skipped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, x_ticks: &[String], series: &[(String, Vec<Option<f64>>)], meta: &str) -> String {
    let mut out = String::new();
    open(&mut out, title, meta);
    let (lo, hi) = y_range(series.iter().flat_map(|s| s.1.iter().flatten().copied()));
    axes(&mut out, lo, hi, y_label);
    let n = x_ticks.len().max(1);
    let to_x = |i: usize| if n == 1 { (LEFT + W - RIGHT) / 2.0 } else { LEFT + 10.0 + (W - RIGHT - LEFT - 20.0) * i as f64 / (n - 1) as f64 };
    for (i, t) in x_ticks.iter().enumerate() {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, to_x(i), H - BOTTOM + 16.0, escape(t));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 18.0, escape(x_label));
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.filter(|v| v.is_finite()).map(|v| format!("{:.1},{:.1}", to_x(i), to_y(v, lo, hi))))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for p in &pts {
            let (px, py) = p.split_once(',').unwrap();
            let _ = writeln!(out, r#"<circle cx="{px}" cy="{py}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = W - RIGHT + 15.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_chart_has_one_bar_per_value() {
        let s = bar_chart("t", "scr", &[("a".into(), 1.0), ("b<".into(), 2.0)], "scenario_sha256=x");
        assert_eq!(s.matches("<rect ").count(), 3);
        assert!(s.contains("b&lt;"));
        assert!(s.contains("scenario_sha256=x"));
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn line_chart_skips_missing_points() {
        let s = line_chart("t", "x", "y", &["1".into(), "2".into(), "3".into()], &[("a".into(), vec![Some(1.0), None, Some(3.0)])], "");
        assert_eq!(s.matches("<circle").count(), 2);
    }
}
