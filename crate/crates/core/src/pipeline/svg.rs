//! Minimal static SVG charts.

use std::fmt::Write as _;

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Fixed-size document with provenance comments.
pub struct Svg {
    out: String,
}

impl Svg {
    pub fn new(width: f64, height: f64, header: &[String]) -> Self {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        for line in header {
            let _ = writeln!(out, "<!-- {} -->", line.replace("--", "- -"));
        }
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(out, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
        Self { out }
    }

    pub fn push(&mut self, fragment: &str) {
        self.out.push_str(fragment);
        if !fragment.ends_with('\n') {
            self.out.push('\n');
        }
    }

    pub fn text(&mut self, x: f64, y: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.out,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\">{}</text>",
            escape(content)
        );
    }

    pub fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Plot area mapping data coordinates to pixels; `y` grows upwards.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    /// Frame whose y range covers `values` with a small margin.
    pub fn fitted(left: f64, top: f64, width: f64, height: f64, x: (f64, f64), values: impl Iterator<Item = f64>) -> Self {
        let (lo, hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        Self {
            left,
            top,
            width,
            height,
            x_min: x.0,
            x_max: if x.1 > x.0 { x.1 } else { x.0 + 1.0 },
            y_min: lo - pad,
            y_max: hi + pad,
        }
    }

    pub fn x(&self, v: f64) -> f64 {
        self.left + (v - self.x_min) / (self.x_max - self.x_min) * self.width
    }

    pub fn y(&self, v: f64) -> f64 {
        self.top + self.height - (v - self.y_min) / (self.y_max - self.y_min) * self.height
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    /// Attributes recording the data-to-pixel mapping.
    pub fn data_attrs(&self) -> String {
        format!(
            "data-y-min=\"{:e}\" data-y-max=\"{:e}\" data-top=\"{}\" data-bottom=\"{}\"",
            self.y_min,
            self.y_max,
            self.top,
            self.bottom()
        )
    }

    /// Border, y-range labels and a title.
    pub fn axes(&self, svg: &mut Svg, title: &str) {
        svg.push(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
            self.left, self.top, self.width, self.height
        ));
        svg.text(self.left - 4.0, self.top + 10.0, "end", &format!("{:.3}", self.y_max));
        svg.text(self.left - 4.0, self.bottom(), "end", &format!("{:.3}", self.y_min));
        svg.text(self.left, self.bottom() + 13.0, "start", &format!("{}", self.x_min));
        svg.text(self.left + self.width, self.bottom() + 13.0, "end", &format!("{}", self.x_max));
        svg.text(self.left + self.width / 2.0, self.top - 5.0, "middle", title);
    }

    /// Polyline through `(xs[k], ys[k])`.
    pub fn line(&self, xs: &[f64], ys: &[f64], color: &str, class: &str) -> String {
        let mut d = String::with_capacity(xs.len() * 16);
        for (k, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, self.x(x), self.y(y));
        }
        format!("<path class=\"{class}\" d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>")
    }

    /// Full-height band from `x0` to `x1`.
    pub fn band(&self, x0: f64, x1: f64, color: &str, class: &str) -> String {
        let (a, b) = (self.x(x0), self.x(x1));
        format!(
            "<rect class=\"{class}\" x=\"{a:.2}\" y=\"{}\" width=\"{:.2}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"0.25\"/>",
            self.top,
            (b - a).max(0.5),
            self.height
        )
    }
}

/// Distinct stroke colors cycled per series.
pub const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
