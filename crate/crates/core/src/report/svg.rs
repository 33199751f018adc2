use std::fmt::Write;

use crate::pipeline::PairAnalysis;
use crate::rci::Category;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;

const IMPROVED: &str = "#1b9e77";
const NO_CHANGE: &str = "#9e9e9e";
const DETERIORATED: &str = "#d95f02";

fn colour(c: Category) -> &'static str {
    match c {
        Category::Improved => IMPROVED,
        Category::Deteriorated => DETERIORATED,
        _ => NO_CHANGE,
    }
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = write!(body, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = write!(body, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, esc(title));
        Canvas { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dash: Option<&str>) {
        let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        let _ = write!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"{dash}/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = write!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#);
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = write!(self.body, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#, esc(s));
    }

    fn axes(&mut self, xlabel: &str, ylabel: &str) {
        self.line(PAD, H - PAD, W - PAD, H - PAD, "black", None);
        self.line(PAD, PAD, PAD, H - PAD, "black", None);
        self.text(W / 2.0, H - 16.0, "middle", xlabel);
        let _ = write!(
            self.body,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(ylabel)
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (label, fill)) in entries.iter().enumerate() {
            let y = PAD + 16.0 * i as f64;
            self.rect(W - PAD - 110.0, y - 9.0, 10.0, 10.0, fill);
            self.text(W - PAD - 94.0, y, "start", label);
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Histogram of RCI values for analysable items with dashed lines at the
/// classification threshold.
pub fn rci_histogram_svg(pair: &PairAnalysis) -> Option<String> {
    let t = pair.measurement.alpha_threshold;
    let values: Vec<f64> = pair.classifications.iter().filter_map(|c| c.rci).collect();
    if values.is_empty() {
        return None;
    }
    let mut c = Canvas::new(&format!("{}: RCI distribution", pair.label));
    c.axes("RCI", "items");
    let extent = values.iter().fold(t + 1.0, |m, v| m.max(v.abs())).ceil();
    let n_bins = 40usize;
    let width = 2.0 * extent / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for v in &values {
        let i = (((v + extent) / width).floor() as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let sx = |x: f64| PAD + (x + extent) / (2.0 * extent) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y / top * (H - 2.0 * PAD);
    for (i, &n) in counts.iter().enumerate() {
        let lo = -extent + i as f64 * width;
        let mid = lo + width / 2.0;
        let fill = if mid > t {
            IMPROVED
        } else if mid < -t {
            DETERIORATED
        } else {
            NO_CHANGE
        };
        c.rect(sx(lo), sy(n as f64), sx(lo + width) - sx(lo), sy(0.0) - sy(n as f64), fill);
    }
    for x in [-t, t] {
        c.line(sx(x), PAD, sx(x), H - PAD, "black", Some("6 4"));
    }
    c.text(sx(-extent), H - PAD + 16.0, "middle", &format!("{}", -extent));
    c.text(sx(0.0), H - PAD + 16.0, "middle", "0");
    c.text(sx(extent), H - PAD + 16.0, "middle", &format!("{extent}"));
    c.text(PAD - 6.0, sy(top) + 4.0, "end", &format!("{top}"));
    Some(c.finish())
}

/// Stacked improved / no change / deteriorated bars per difficulty bin.
pub fn churn_by_bin_svg(pair: &PairAnalysis) -> Option<String> {
    let table = pair.bins.computed()?;
    let mut c = Canvas::new(&format!("{}: outcome by v1 difficulty", pair.label));
    c.axes("p_v1 bin", "share of analysable items");
    let n = table.bins.len() as f64;
    let slot = (W - 2.0 * PAD) / n;
    for (i, b) in table.bins.iter().enumerate() {
        let x = PAD + i as f64 * slot + slot * 0.15;
        let bw = slot * 0.7;
        let mut y = H - PAD;
        if b.n > 0 {
            for (count, fill) in [(b.n_improved, IMPROVED), (b.n_no_change, NO_CHANGE), (b.n_deteriorated, DETERIORATED)] {
                let h = count as f64 / b.n as f64 * (H - 2.0 * PAD);
                c.rect(x, y - h, bw, h, fill);
                y -= h;
            }
        }
        c.text(x + bw / 2.0, H - PAD + 16.0, "middle", &format!("{}-{}", b.lo, b.hi));
        c.text(x + bw / 2.0, H - PAD + 30.0, "middle", &format!("n={}", b.n));
    }
    c.legend(&[("improved", IMPROVED), ("no change", NO_CHANGE), ("deteriorated", DETERIORATED)]);
    Some(c.finish())
}

/// Domain by category heatmap of row shares.
pub fn domain_heatmap_svg(pair: &PairAnalysis) -> Option<String> {
    let ct = pair.contingency.computed()?;
    let mut c = Canvas::new(&format!("{}: outcome by domain", pair.label));
    let rows = ct.rows.len() as f64;
    let left = 150.0;
    let cw = (W - left - PAD) / 3.0;
    let rh = ((H - 2.0 * PAD) / rows).min(48.0);
    for (j, name) in ["improved", "no change", "deteriorated"].iter().enumerate() {
        c.text(left + cw * (j as f64 + 0.5), PAD - 8.0, "middle", name);
    }
    for (i, r) in ct.rows.iter().enumerate() {
        let total: usize = r.counts.iter().sum();
        let y = PAD + i as f64 * rh;
        c.text(left - 8.0, y + rh / 2.0 + 4.0, "end", &r.domain);
        for j in 0..3 {
            let share = if total > 0 { r.counts[j] as f64 / total as f64 } else { 0.0 };
            let shade = (255.0 * (1.0 - share)).round() as u8;
            c.rect(left + cw * j as f64, y, cw - 2.0, rh - 2.0, &format!("rgb({shade},{shade},255)"));
            c.text(left + cw * (j as f64 + 0.5), y + rh / 2.0 + 4.0, "middle", &r.counts[j].to_string());
        }
    }
    Some(c.finish())
}

/// v1 against v2 proportion correct with the identity line and a dotted band
/// of half-width equal to the minimum detectable change.
pub fn scatter_svg(pair: &PairAnalysis) -> Option<String> {
    if pair.churn.n_analysable == 0 {
        return None;
    }
    let mut c = Canvas::new(&format!("{}: per-item accuracy", pair.label));
    c.axes(&format!("p ({})", pair.v1.model_id), &format!("p ({})", pair.v2.model_id));
    let span = W.min(H) - 2.0 * PAD;
    let sx = |x: f64| PAD + x * span;
    let sy = |y: f64| H - PAD - y * span;
    let d = pair.measurement.min_detectable_delta;
    c.line(sx(0.0), sy(0.0), sx(1.0), sy(1.0), "black", None);
    if d > 0.0 && d < 1.0 {
        c.line(sx(0.0), sy(d), sx(1.0 - d), sy(1.0), "black", Some("2 3"));
        c.line(sx(d), sy(0.0), sx(1.0), sy(1.0 - d), "black", Some("2 3"));
    }
    for cl in &pair.classifications {
        if let (Some(a), Some(b)) = (cl.p_v1, cl.p_v2) {
            let _ = write!(
                c.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.6" data-category="{}"/>"#,
                sx(a),
                sy(b),
                colour(cl.category),
                cl.category.label()
            );
        }
    }
    for v in [0.0, 0.5, 1.0] {
        c.text(sx(v), H - PAD + 16.0, "middle", &format!("{v}"));
        c.text(PAD - 6.0, sy(v) + 4.0, "end", &format!("{v}"));
    }
    c.legend(&[("improved", IMPROVED), ("no change", NO_CHANGE), ("deteriorated", DETERIORATED)]);
    Some(c.finish())
}
