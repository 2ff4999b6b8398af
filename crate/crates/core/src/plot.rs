//! Minimal SVG emission for line plots, stem plots and heatmaps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Bare SVG document builder.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let mut p = String::new();
        for (x, y) in pts {
            let _ = write!(p, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.2" points="{}"/>"#,
            p.trim_end()
        );
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="{fill}" fill-opacity="0.6"/>"#
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map from data range onto the plot frame.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (x0, x1) = range(xs);
        let (y0, y1) = range(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in v.filter(|x| x.is_finite()) {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn axes(svg: &mut Svg, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    svg.line(MARGIN, H - MARGIN, W - MARGIN, H - MARGIN, "black", 1.0);
    svg.line(MARGIN, MARGIN, MARGIN, H - MARGIN, "black", 1.0);
    svg.text(W / 2.0, 24.0, 15.0, "middle", title);
    svg.text(W / 2.0, H - 12.0, 12.0, "middle", xlabel);
    svg.text(14.0, H / 2.0, 12.0, "start", ylabel);
    for (v, anchor) in [(f.x0, "start"), (f.x1, "end")] {
        svg.text(f.px(v), H - MARGIN + 16.0, 10.0, anchor, &fmt_tick(v));
    }
    for v in [f.y0, f.y1] {
        svg.text(MARGIN - 4.0, f.py(v) + 4.0, 10.0, "end", &fmt_tick(v));
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// One or more named series on shared axes.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, &[(f64, f64)])]) -> String {
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let f = Frame::fit(all.clone().map(|p| p.0), all.map(|p| p.1));
    let mut svg = Svg::new(W, H);
    axes(&mut svg, &f, title, xlabel, ylabel);
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mapped: Vec<_> = pts
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| (f.px(x), f.py(y)))
            .collect();
        svg.polyline(&mapped, color);
        svg.text(W - MARGIN, MARGIN + 14.0 * i as f64, 11.0, "end", label);
        svg.line(W - MARGIN + 4.0, MARGIN - 4.0 + 14.0 * i as f64, W - 8.0, MARGIN - 4.0 + 14.0 * i as f64, color, 2.0);
    }
    svg.finish()
}

/// Correlogram: vertical stems at integer lags with an optional `±band`.
pub fn stem_plot(title: &str, lags: &[i64], values: &[f64], band: Option<f64>) -> String {
    let f = Frame {
        x0: lags.first().copied().unwrap_or(0) as f64 - 0.5,
        x1: lags.last().copied().unwrap_or(1) as f64 + 0.5,
        y0: -1.0,
        y1: 1.0,
    };
    let mut svg = Svg::new(W, H);
    axes(&mut svg, &f, title, "lag", "correlation");
    svg.line(f.px(f.x0), f.py(0.0), f.px(f.x1), f.py(0.0), "gray", 0.8);
    if let Some(b) = band {
        for y in [b, -b] {
            svg.line(f.px(f.x0), f.py(y), f.px(f.x1), f.py(y), "#9999ff", 0.8);
        }
    }
    for (&l, &v) in lags.iter().zip(values) {
        let x = f.px(l as f64);
        svg.line(x, f.py(0.0), x, f.py(v), PALETTE[0], 2.0);
        svg.circle(x, f.py(v), 2.5, PALETTE[0]);
    }
    svg.finish()
}

/// Row-major `rows x cols` heatmap; row 0 is drawn at the bottom.
pub fn heatmap(title: &str, values: &[f64], rows: usize, cols: usize) -> String {
    let size = 400.0;
    let cell_w = size / cols as f64;
    let cell_h = size / rows as f64;
    let max = values.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let mut svg = Svg::new(size + 20.0, size + 50.0);
    svg.text(size / 2.0 + 10.0, 24.0, 15.0, "middle", title);
    for r in 0..rows {
        for c in 0..cols {
            let t = (values[r * cols + c] / max).clamp(0.0, 1.0);
            let shade = (255.0 * (1.0 - t)).round() as u8;
            if shade < 255 {
                let fill = format!("rgb({shade},{shade},255)");
                let y = 40.0 + size - (r + 1) as f64 * cell_h;
                svg.rect(10.0 + c as f64 * cell_w, y, cell_w + 0.05, cell_h + 0.05, &fill);
            }
        }
    }
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_well_formed() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)];
        let s = line_plot("a<b", "x", "y", &[("s", &pts)]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b"));
        assert_eq!(s.matches("<polyline").count(), 1);
    }

    #[test]
    fn heatmap_skips_empty_cells() {
        let s = heatmap("h", &[0.0, 1.0, 0.0, 0.0], 2, 2);
        assert_eq!(s.matches("<rect").count(), 2);
    }
}
