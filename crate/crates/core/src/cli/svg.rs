//! Minimal SVG line plots and heat maps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Self { name: name.into(), xs, ys, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

fn axes(out: &mut String, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str) {
    let (l, r, t, b) = MARGIN;
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - l - r,
        H - t - b
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let px = l + f * (W - l - r);
        let py = H - b - f * (H - t - b);
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            H - b + 16.0,
            x.0 + f * (x.1 - x.0)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3e}</text>"#,
            l - 6.0,
            py + 4.0,
            y.0 + f * (y.1 - y.0)
        );
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (l + W - r) / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        (t + H - b) / 2.0,
        (t + H - b) / 2.0,
        escape(y_label)
    );
}

/// Line plot of one or more series on shared axes.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (l, r, t, b) = MARGIN;
    let x = range(series.iter().flat_map(|s| s.xs.iter().copied()));
    let y = range(series.iter().flat_map(|s| s.ys.iter().copied()));
    let px = |v: f64| l + (v - x.0) / (x.1 - x.0) * (W - l - r);
    let py = |v: f64| H - b - (v - y.0) / (y.1 - y.0) * (H - t - b);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x, y, x_label, y_label);
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .xs
            .iter()
            .zip(&s.ys)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = t + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/>"#,
            W - r - 150.0,
            W - r - 126.0
        );
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, W - r - 120.0, ly + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

// white to dark blue
fn shade(f: f64) -> String {
    let f = f.clamp(0.0, 1.0);
    let c = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(255.0, 8.0), c(255.0, 48.0), c(255.0, 107.0))
}

/// Heat map of `values[ix + nx * iy]` over `[x0, x1] x [y0, y1]`.
pub fn heat_map(title: &str, nx: usize, ny: usize, values: &[f64], x: (f64, f64), y: (f64, f64)) -> String {
    assert_eq!(values.len(), nx * ny);
    let (l, r, t, b) = MARGIN;
    let v = range(values.iter().copied());
    let cw = (W - l - r) / nx as f64;
    let ch = (H - t - b) / ny as f64;
    let mut out = String::new();
    header(&mut out, title);
    for iy in 0..ny {
        for ix in 0..nx {
            let val = values[ix + nx * iy];
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                l + ix as f64 * cw,
                H - b - (iy + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05,
                shade((val - v.0) / (v.1 - v.0))
            );
        }
    }
    axes(&mut out, x, y, "xi_1", "xi_2");
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">range [{:.4e}, {:.4e}]</text>"#,
        W - r,
        t - 6.0,
        v.0,
        v.1
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_well_formed_and_deterministic() {
        let s = vec![Series::new("a<b", vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0]), Series::new("c", vec![0.0], vec![f64::NAN]).dashed()];
        let a = line_plot("t", "x", "y", &s);
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a&lt;b"));
        assert_eq!(a, line_plot("t", "x", "y", &s));
    }

    #[test]
    fn heat_map_has_one_cell_per_value() {
        let m = heat_map("h", 3, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], (0.0, 1.0), (0.0, 1.0));
        assert_eq!(m.matches("<rect").count(), 2 + 6);
    }
}
