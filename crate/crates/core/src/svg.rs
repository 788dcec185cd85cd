//! Static SVG rendering of plot data. Output depends only on the input data:
//! coordinates are printed with two decimals and elements are emitted in
//! data order, so identical input gives byte-identical files.

use std::fmt::Write;

use crate::io::{EffectSizeData, EnvelopeData, EnvelopePanel, ManhattanData, PlotData};

const SPATIAL_COLOR: &str = "#1f77b4";
const OBJECT_COLOR: &str = "#ff7f0e";
const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn class_color(class: &str) -> &'static str {
    if class == "spatial" {
        SPATIAL_COLOR
    } else {
        OBJECT_COLOR
    }
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new((d0, d1): (f64, f64), (p0, p1): (f64, f64)) -> Self {
        let d1 = if d1 > d0 { d1 } else { d0 + 1.0 };
        Self { d0, d1, p0, p1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

/// "Nice" tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn open_svg(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(out, "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>");
}

fn y_axis(out: &mut String, y: Scale, x_left: f64, x_right: f64, lo: f64, hi: f64, label: &str) {
    let _ = writeln!(
        out,
        "<line class=\"axis\" x1=\"{x_left:.2}\" y1=\"{:.2}\" x2=\"{x_left:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        y.p0, y.p1
    );
    for t in ticks(lo, hi, 6) {
        let py = y.at(t);
        let _ = writeln!(
            out,
            "<line class=\"grid\" x1=\"{x_left:.2}\" y1=\"{py:.2}\" x2=\"{x_right:.2}\" y2=\"{py:.2}\" stroke=\"#e5e5e5\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>{}</text>",
            x_left - 4.0,
            py + 4.0,
            tick_label(t)
        );
    }
    let mid = 0.5 * (y.p0 + y.p1);
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{mid:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {mid:.2})\" {FONT}>{}</text>",
        x_left - 36.0,
        x_left - 36.0,
        escape(label)
    );
}

fn legend(out: &mut String, x: f64, y: f64) {
    for (i, (label, color)) in [("spatial", SPATIAL_COLOR), ("object-level", OBJECT_COLOR)].iter().enumerate() {
        let ly = y + 16.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect class=\"legend\" x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            ly - 9.0
        );
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{ly:.2}\" {FONT}>{label}</text>", x + 14.0);
    }
}

/// Manhattan plot: one circle per feature at its significance rank, y =
/// −log₁₀(p), a dashed threshold line and two category colours.
pub fn render_manhattan(data: &ManhattanData) -> String {
    let n = data.points.len();
    let (left, right, top, bottom) = (70.0, 150.0, 30.0, 170.0);
    let width = (left + right + 18.0 * n.max(10) as f64).max(700.0);
    let height = 520.0;
    let y_max = data
        .points
        .iter()
        .map(|p| p.neg_log10_p)
        .fold(data.threshold.neg_log10_p, f64::max)
        * 1.1;
    let x = Scale::new((0.0, (n + 1) as f64), (left, width - right));
    let y = Scale::new((0.0, y_max), (height - bottom, top));

    let mut out = String::new();
    open_svg(&mut out, width, height);
    y_axis(&mut out, y, left, width - right, 0.0, y_max, "-log10(p)");
    let _ = writeln!(
        out,
        "<line class=\"axis\" x1=\"{left:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        y.p0,
        width - right,
        y.p0
    );
    let ty = y.at(data.threshold.neg_log10_p);
    let _ = writeln!(
        out,
        "<line class=\"threshold\" x1=\"{left:.2}\" y1=\"{ty:.2}\" x2=\"{:.2}\" y2=\"{ty:.2}\" stroke=\"#d62728\" stroke-dasharray=\"6,4\"/>",
        width - right
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{} p = {:.3e}</text>",
        width - right + 6.0,
        ty + 4.0,
        escape(&data.threshold.label),
        data.threshold.p
    );
    for p in &data.points {
        let px = x.at(p.rank as f64);
        let py = y.at(p.neg_log10_p);
        let _ = writeln!(
            out,
            "<circle class=\"point\" cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"{}\"><title>{} ({}) p={:.3e}</title></circle>",
            class_color(&p.class),
            escape(&p.feature),
            escape(&p.category),
            p.p
        );
        let ly = y.p0 + 8.0;
        let _ = writeln!(
            out,
            "<text x=\"{px:.2}\" y=\"{ly:.2}\" text-anchor=\"end\" transform=\"rotate(-60 {px:.2} {ly:.2})\" {FONT}>{}</text>",
            escape(&p.feature)
        );
    }
    legend(&mut out, width - right + 6.0, top + 10.0);
    out.push_str("</svg>\n");
    out
}

/// Effect-size plot: one row per feature with a horizontal 95% CI bar, a
/// marker at beta and a dashed zero line. An empty input yields a notice.
pub fn render_effect_size(data: &EffectSizeData) -> String {
    let n = data.features.len();
    let (left, right, top, bottom) = (200.0, 150.0, 30.0, 50.0);
    let width = 800.0;
    let height = top + bottom + 24.0 * n.max(3) as f64;
    let mut out = String::new();
    open_svg(&mut out, width, height);
    if n == 0 {
        let _ = writeln!(
            out,
            "<text class=\"notice\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>No features passed the significance threshold</text>",
            width / 2.0,
            height / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }
    let lo = data.features.iter().map(|f| f.ci_low).fold(0.0, f64::min);
    let hi = data.features.iter().map(|f| f.ci_high).fold(0.0, f64::max);
    let pad = 0.05 * (hi - lo).max(1e-12);
    let x = Scale::new((lo - pad, hi + pad), (left, width - right));
    let row = |i: usize| top + 12.0 + 24.0 * i as f64;
    let base = height - bottom;

    let _ = writeln!(
        out,
        "<line class=\"axis\" x1=\"{left:.2}\" y1=\"{base:.2}\" x2=\"{:.2}\" y2=\"{base:.2}\" stroke=\"black\"/>",
        width - right
    );
    for t in ticks(lo - pad, hi + pad, 6) {
        let px = x.at(t);
        let _ = writeln!(
            out,
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
            base + 16.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>beta (per SD) and 95% CI</text>",
        0.5 * (left + width - right),
        base + 36.0
    );
    let zx = x.at(0.0);
    let _ = writeln!(
        out,
        "<line class=\"zero\" x1=\"{zx:.2}\" y1=\"{top:.2}\" x2=\"{zx:.2}\" y2=\"{base:.2}\" stroke=\"gray\" stroke-dasharray=\"4,3\"/>"
    );
    for (i, f) in data.features.iter().enumerate() {
        let py = row(i);
        let color = class_color(&f.class);
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>{}</text>",
            left - 8.0,
            py + 4.0,
            escape(&f.feature)
        );
        let _ = writeln!(
            out,
            "<line class=\"ci\" x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            x.at(f.ci_low),
            x.at(f.ci_high)
        );
        let _ = writeln!(
            out,
            "<rect class=\"beta\" x=\"{:.2}\" y=\"{:.2}\" width=\"8\" height=\"8\" fill=\"{color}\"><title>{} beta={:.4} [{:.4}, {:.4}]</title></rect>",
            x.at(f.beta) - 4.0,
            py - 4.0,
            escape(&f.feature),
            f.beta,
            f.ci_low,
            f.ci_high
        );
    }
    legend(&mut out, width - right + 16.0, top + 10.0);
    out.push_str("</svg>\n");
    out
}

fn polyline_segments(xs: &[f64], ys: &[Option<f64>], x: Scale, y: Scale) -> Vec<String> {
    let mut segments = Vec::new();
    let mut current = String::new();
    for (&r, v) in xs.iter().zip(ys) {
        match v {
            Some(v) => {
                if !current.is_empty() {
                    current.push(' ');
                }
                let _ = write!(current, "{:.2},{:.2}", x.at(r), y.at(*v));
            }
            None if !current.is_empty() => segments.push(std::mem::take(&mut current)),
            None => {}
        }
    }
    if !current.is_empty() {
        segments.push(current);
    }
    segments
}

fn envelope_panel(out: &mut String, panel: &EnvelopePanel, origin_x: f64, panel_w: f64, height: f64) {
    let (left, right, top, bottom) = (50.0, 12.0, 30.0, 40.0);
    let values = panel
        .lower
        .iter()
        .chain(&panel.upper)
        .flatten()
        .chain(&panel.theoretical)
        .chain(panel.samples.iter().flatten().flatten());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let pad = 0.05 * (hi - lo).max(1e-9);
    let r_max = panel.radii.last().copied().unwrap_or(1.0);
    let x = Scale::new((0.0, r_max), (origin_x + left, origin_x + panel_w - right));
    let y = Scale::new((lo - pad, hi + pad), (height - bottom, top));

    let _ = writeln!(out, "<g class=\"panel\" data-function=\"{}\">", escape(&panel.function));
    y_axis(out, y, x.p0, x.p1, lo - pad, hi + pad, &format!("{}(r)", panel.function));
    let _ = writeln!(
        out,
        "<line class=\"axis\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        x.p0, y.p0, x.p1, y.p0
    );
    for t in ticks(0.0, r_max, 5) {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
            x.at(t),
            y.p0 + 14.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>r (µm)</text>",
        0.5 * (x.p0 + x.p1),
        y.p0 + 30.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}-function (coverage {:.3})</text>",
        0.5 * (x.p0 + x.p1),
        top - 10.0,
        escape(&panel.function),
        panel.coverage
    );

    // Band: upper left to right, then lower right to left, where both exist.
    let mut band = String::new();
    let both: Vec<(f64, f64, f64)> = panel
        .radii
        .iter()
        .zip(panel.lower.iter().zip(&panel.upper))
        .filter_map(|(&r, (l, u))| Some((r, (*l)?, (*u)?)))
        .collect();
    for &(r, _, u) in &both {
        let _ = write!(band, "{:.2},{:.2} ", x.at(r), y.at(u));
    }
    for &(r, l, _) in both.iter().rev() {
        let _ = write!(band, "{:.2},{:.2} ", x.at(r), y.at(l));
    }
    let _ = writeln!(out, "<polygon class=\"envelope\" points=\"{}\" fill=\"#bbbbbb\" fill-opacity=\"0.6\"/>", band.trim_end());

    for sample in &panel.samples {
        for seg in polyline_segments(&panel.radii, sample, x, y) {
            let _ = writeln!(
                out,
                "<polyline class=\"sample\" points=\"{seg}\" fill=\"none\" stroke=\"#1f77b4\" stroke-opacity=\"0.15\" stroke-width=\"0.6\"/>"
            );
        }
    }
    let theo: Vec<Option<f64>> = panel.theoretical.iter().map(|v| Some(*v)).collect();
    for seg in polyline_segments(&panel.radii, &theo, x, y) {
        let _ = writeln!(
            out,
            "<polyline class=\"theoretical\" points=\"{seg}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>"
        );
    }
    out.push_str("</g>\n");
}

/// Side-by-side panels, one per function: sample curves, envelope band and
/// dashed theoretical curve.
pub fn render_envelope(data: &EnvelopeData) -> String {
    let panel_w = 300.0;
    let height = 300.0;
    let width = panel_w * data.panels.len().max(1) as f64;
    let mut out = String::new();
    open_svg(&mut out, width, height);
    for (i, panel) in data.panels.iter().enumerate() {
        envelope_panel(&mut out, panel, i as f64 * panel_w, panel_w, height);
    }
    out.push_str("</svg>\n");
    out
}

pub fn render(data: &PlotData) -> String {
    match data {
        PlotData::Manhattan(d) => render_manhattan(d),
        PlotData::EffectSize(d) => render_effect_size(d),
        PlotData::Envelope(d) => render_envelope(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{EffectPoint, ManhattanPoint, Threshold};

    fn manhattan(n: usize, n_sig: usize) -> ManhattanData {
        ManhattanData {
            schema_version: 1,
            n_tests: n,
            threshold: Threshold {
                label: "bonferroni".into(),
                p: 0.001,
                neg_log10_p: 3.0,
            },
            points: (0..n)
                .map(|i| {
                    let p = if i < n_sig { 1e-5 } else { 0.01 + i as f64 * 1e-3 };
                    ManhattanPoint {
                        rank: i + 1,
                        feature: format!("f<{i}>"),
                        category: if i % 2 == 0 { "Spacing" } else { "Object-level" }.into(),
                        class: if i % 2 == 0 { "spatial" } else { "object-level" }.into(),
                        p,
                        neg_log10_p: -p.log10(),
                        significant: i < n_sig,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn manhattan_glyphs() {
        let svg = render_manhattan(&manhattan(31, 6));
        assert_eq!(svg.matches("<circle class=\"point\"").count(), 31);
        assert_eq!(svg.matches("class=\"threshold\"").count(), 1);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains(SPATIAL_COLOR) && svg.contains(OBJECT_COLOR));
        assert!(svg.contains("f&lt;0&gt;"));
        assert_eq!(svg, render_manhattan(&manhattan(31, 6)));
    }

    #[test]
    fn effect_size_bar_straddles_zero() {
        let data = EffectSizeData {
            schema_version: 1,
            features: vec![EffectPoint {
                feature: "flat".into(),
                category: "Density".into(),
                class: "spatial".into(),
                beta: 0.0,
                ci_low: -0.5,
                ci_high: 0.5,
                p: 1e-6,
            }],
        };
        let svg = render_effect_size(&data);
        let zero = Scale::new((-0.55, 0.55), (200.0, 650.0)).at(0.0);
        assert!(svg.contains(&format!("x1=\"{zero:.2}\"")));
        assert_eq!(svg.matches("class=\"ci\"").count(), 1);
    }

    #[test]
    fn empty_effect_size_has_notice() {
        let svg = render_effect_size(&EffectSizeData {
            schema_version: 1,
            features: vec![],
        });
        assert!(svg.contains("class=\"notice\""));
        assert!(!svg.contains("class=\"ci\""));
    }

    #[test]
    fn missing_values_split_polylines() {
        let x = Scale::new((0.0, 3.0), (0.0, 3.0));
        let segs = polyline_segments(&[1.0, 2.0, 3.0], &[Some(1.0), None, Some(2.0)], x, x);
        assert_eq!(segs, vec!["1.00,1.00".to_string(), "3.00,2.00".to_string()]);
    }

    #[test]
    fn tick_values() {
        assert_eq!(ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(tick_label(-0.0), "0");
        assert_eq!(tick_label(2.5), "2.5");
    }
}
