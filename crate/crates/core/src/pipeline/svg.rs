//! Minimal static SVG renderings of ALE panels and Shapley bar rankings.
//! Output depends only on the input data, so reruns are byte-identical.

use std::fmt::Write;

use crate::interpret::{AleCurve, Importance};

const W: f64 = 520.0;
const H: f64 = 340.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn label(v: f64) -> String {
    let a = v.abs();
    let s = if a == 0.0 {
        "0".to_string()
    } else if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    };
    if s == "-0" || s == "-0.000" {
        "0".into()
    } else {
        s
    }
}

struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self { lo, hi, a, b }
    }

    fn map(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{x:.1}" y="22" text-anchor="middle" font-size="13">{t}</text>
"#,
        x = W / 2.0,
        t = escape(title)
    );
}

/// Centred ALE curve with its band. Log-scale features keep their
/// log-spaced positions but are labelled with anti-log values.
pub fn ale_svg(curve: &AleCurve, model_label: &str) -> String {
    let mids = curve.midpoints();
    let lower = curve.lower.clone().unwrap_or_else(|| curve.effects.clone());
    let upper = curve.upper.clone().unwrap_or_else(|| curve.effects.clone());
    let x0 = curve.boundaries[0];
    let x1 = *curve.boundaries.last().unwrap();
    let ylo = lower.iter().chain(&curve.effects).fold(0.0f64, |a, &b| a.min(b));
    let yhi = upper.iter().chain(&curve.effects).fold(0.0f64, |a, &b| a.max(b));
    let pad = ((yhi - ylo) * 0.05).max(1e-4);
    let xs = Scale::new(x0, x1, LEFT, W - RIGHT);
    let ys = Scale::new(ylo - pad, yhi + pad, H - BOTTOM, TOP);

    let mut out = String::new();
    header(&mut out, &format!("{model_label}: ALE of {}", curve.feature_name));

    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for t in xs.ticks(4) {
        let shown = if curve.log_scale { t.exp() - 1.0 } else { t };
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            xs.map(t),
            H - BOTTOM + 15.0,
            label(shown)
        );
    }
    for t in ys.ticks(4) {
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT - 6.0,
            ys.map(t) + 4.0,
            label(t)
        );
    }
    let axis = if curve.log_scale {
        format!("{} (anti-log scale)", curve.feature_name)
    } else {
        curve.feature_name.clone()
    };
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
        (LEFT + W - RIGHT) / 2.0,
        H - 15.0,
        escape(&axis)
    );
    let _ = writeln!(
        out,
        r##"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">centred effect on P(default)</text>"##,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0
    );
    let _ = writeln!(
        out,
        r##"<line x1="{LEFT}" x2="{:.1}" y1="{y:.2}" y2="{y:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        W - RIGHT,
        y = ys.map(0.0)
    );

    if curve.lower.is_some() {
        let mut pts: Vec<String> = mids
            .iter()
            .zip(&upper)
            .map(|(&x, &y)| format!("{:.2},{:.2}", xs.map(x), ys.map(y)))
            .collect();
        pts.extend(
            mids.iter()
                .zip(&lower)
                .rev()
                .map(|(&x, &y)| format!("{:.2},{:.2}", xs.map(x), ys.map(y))),
        );
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>"##,
            pts.join(" ")
        );
    }
    let line: Vec<String> = mids
        .iter()
        .zip(&curve.effects)
        .map(|(&x, &y)| format!("{:.2},{:.2}", xs.map(x), ys.map(y)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
        line.join(" ")
    );
    out.push_str("</svg>\n");
    out
}

/// Horizontal bars of global importance, largest first.
pub fn shapley_svg(ranked: &[Importance], model_label: &str) -> String {
    let mut out = String::new();
    header(&mut out, &format!("{model_label}: global Shapley values"));
    let left = 130.0;
    let max = ranked.iter().map(|r| r.importance).fold(0.0f64, f64::max);
    let xs = Scale::new(0.0, if max > 0.0 { max } else { 1.0 }, left, W - 70.0);
    let rows = ranked.len().max(1) as f64;
    let step = (H - TOP - 20.0) / rows;
    for (i, r) in ranked.iter().enumerate() {
        let y = TOP + i as f64 * step;
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            left - 6.0,
            y + step * 0.6,
            escape(&r.feature)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{left}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#3182bd"/>"##,
            y + step * 0.15,
            xs.map(r.importance) - left,
            step * 0.7
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}">{}</text>"##,
            xs.map(r.importance) + 4.0,
            y + step * 0.6,
            label(r.importance)
        );
    }
    out.push_str("</svg>\n");
    out
}
