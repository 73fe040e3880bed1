//! Static SVG plots: the domain with marked points, a boundary trace, and the
//! bisection trace. Output is deterministic: fixed precision, no timestamps.

use crate::domain::CircularDomain;
use crate::C64;
use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 480.0;
const PAD: f64 = 40.0;

/// Minimal SVG document with a world-to-pixel map.
struct Canvas {
    body: String,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Canvas {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            body: String::new(),
            x0,
            x1,
            y0,
            y1,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD);
        let sy = H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD);
        (sx, sy)
    }

    fn scale(&self) -> f64 {
        (W - 2.0 * PAD) / (self.x1 - self.x0)
    }

    fn circle(&mut self, c: C64, r: f64, style: &str) {
        let (x, y) = self.px(c.re, c.im);
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" {style}/>"#, r * self.scale());
    }

    fn dot(&mut self, c: C64, color: &str) {
        let (x, y) = self.px(c.re, c.im);
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/>"#);
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let mut s = String::new();
        for &(x, y) in pts {
            let (a, b) = self.px(x, y);
            let _ = write!(s, "{a:.2},{b:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
            s.trim_end()
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(self.body, r#"<text x="{x:.2}" y="{y:.2}" font-size="12" font-family="sans-serif">{s}</text>"#);
    }

    fn axes(&mut self, xlabel: &str, ylabel: &str) {
        let (ax, ay) = self.px(self.x0, self.y0);
        let (bx, by) = self.px(self.x1, self.y1);
        let _ = writeln!(
            self.body,
            r##"<rect x="{ax:.2}" y="{by:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#888"/>"##,
            bx - ax,
            ay - by
        );
        let lo = format!("{:.4}", self.y0);
        let hi = format!("{:.4}", self.y1);
        self.text(4.0, ay, &lo);
        self.text(4.0, by + 12.0, &hi);
        self.text(W / 2.0 - 20.0, H - 10.0, xlabel);
        self.text(4.0, PAD - 20.0, ylabel);
    }

    fn finish(self, title: &str) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{PAD}\" y=\"16\" font-size=\"13\" font-family=\"sans-serif\">{title}</text>\n{}</svg>\n",
            self.body
        )
    }
}

/// Marked point sets drawn on the domain plot.
pub struct Marks<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: &'a [C64],
}

/// Domain boundary with labelled point sets.
pub fn domain_plot(domain: &CircularDomain, marks: &[Marks]) -> String {
    let o = domain.outer();
    let r = o.radius * 1.05;
    let mut cv = Canvas::new(o.center - r, o.center + r, -r, r);
    let style = r##"fill="none" stroke="#222" stroke-width="1.5""##;
    for c in domain.curves() {
        cv.circle(C64::new(c.center, 0.0), c.radius, style);
    }
    let (a, _) = cv.px(o.center - r, 0.0);
    let (b, _) = cv.px(o.center + r, 0.0);
    let (_, y) = cv.px(0.0, 0.0);
    let _ = writeln!(cv.body, r##"<line x1="{a:.2}" y1="{y:.2}" x2="{b:.2}" y2="{y:.2}" stroke="#bbb" stroke-dasharray="4 3"/>"##);
    for (i, m) in marks.iter().enumerate() {
        for &z in m.points {
            cv.dot(z, m.color);
        }
        let ly = H - 12.0 - 14.0 * i as f64;
        let _ = writeln!(cv.body, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, W - 150.0, ly - 4.0, m.color);
        cv.text(W - 140.0, ly, m.label);
    }
    cv.finish("domain")
}

/// Line plot of one or more series against a shared abscissa.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, &str, Vec<(f64, f64)>)]) -> String {
    let all = series.iter().flat_map(|s| s.2.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 - y0 > 1e-12) {
        y0 -= 0.5e-3;
        y1 += 0.5e-3;
    }
    let mut cv = Canvas::new(x0, x1, y0, y1);
    cv.axes(xlabel, ylabel);
    for (i, (label, color, pts)) in series.iter().enumerate() {
        cv.polyline(pts, color);
        let ly = PAD + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            cv.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            W - 160.0,
            ly - 4.0,
            W - 145.0,
            ly - 4.0
        );
        cv.text(W - 140.0, ly, label);
    }
    cv.finish(title)
}

/// Bisection probes in order, green when feasible and red otherwise.
pub fn bisection_plot(probes: &[(f64, bool)]) -> String {
    let n = probes.len().max(2) as f64;
    let y0 = probes.iter().map(|p| p.0).fold(1.0, f64::min);
    let mut cv = Canvas::new(0.0, n - 1.0, y0, 1.0);
    cv.axes("probe", "rho");
    let pts: Vec<(f64, f64)> = probes.iter().enumerate().map(|(i, p)| (i as f64, p.0)).collect();
    cv.polyline(&pts, "#999");
    for (i, &(rho, ok)) in probes.iter().enumerate() {
        cv.dot(C64::new(i as f64, rho), if ok { "#2a2" } else { "#c22" });
    }
    cv.finish("bisection trace")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_deterministic_and_closed() {
        let d = CircularDomain::reference();
        let pts = [C64::new(0.1, 0.2)];
        let a = domain_plot(&d, &[Marks { label: "z", color: "red", points: &pts }]);
        assert_eq!(a, domain_plot(&d, &[Marks { label: "z", color: "red", points: &pts }]));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<circle").count(), 3 + 1 + 1);
        let b = line_plot("t", "x", "y", &[("s", "blue", vec![(0.0, 1.0), (1.0, 1.0)])]);
        assert!(b.contains("<polyline"));
        let c = bisection_plot(&[(1.0, false), (0.5, true)]);
        assert!(c.contains("#2a2") && c.contains("#c22"));
    }
}
