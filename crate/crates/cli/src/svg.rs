//! Minimal standalone SVG charts.

use std::fmt::Write as _;

use vrmerge_core::FeasibleRegion;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const MAX_POINTS: usize = 1500;

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#ad494a",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, index: usize, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            color: color(index).to_string(),
            dashed: false,
            points,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Keep x and y scales equal (trajectory plots).
    pub equal_aspect: bool,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
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
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(out, r#"<g class="axes" stroke="black" fill="none"><rect x="{l}" y="{t}" width="{}" height="{}"/></g>"#, r - l, b - t);
    for x in nice_ticks(f.x0, f.x1, 8) {
        let px = f.px(x);
        let _ = writeln!(out, r##"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{t}" stroke="#e0e0e0"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##, b + 16.0, tick_label(x));
    }
    for y in nice_ticks(f.y0, f.y1, 6) {
        let py = f.py(y);
        let _ = writeln!(out, r##"<line x1="{l}" y1="{py:.2}" x2="{r}" y2="{py:.2}" stroke="#e0e0e0"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##, l - 6.0, py + 4.0, tick_label(y));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn decimate(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    if finite.len() <= MAX_POINTS {
        return finite;
    }
    let stride = finite.len().div_ceil(MAX_POINTS);
    let mut out: Vec<(f64, f64)> = finite.iter().step_by(stride).copied().collect();
    if let Some(&last) = finite.last() {
        if out.last() != Some(&last) {
            out.push(last);
        }
    }
    out
}

impl LinePlot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, s: Series) -> &mut Self {
        self.series.push(s);
        self
    }

    pub fn render(&self) -> String {
        let all = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let (x0, x1) = padded(x0, x1);
        let (mut y0, mut y1) = padded(y0, y1);
        if self.equal_aspect {
            let plot_w = WIDTH - MARGIN_L - MARGIN_R;
            let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
            let units_per_px = ((x1 - x0) / plot_w).max((y1 - y0) / plot_h);
            let mid = 0.5 * (y0 + y1);
            y0 = mid - 0.5 * units_per_px * plot_h;
            y1 = mid + 0.5 * units_per_px * plot_h;
        }
        let f = Frame { x0, x1, y0, y1 };

        let mut out = String::new();
        header(&mut out, &self.title);
        axes(&mut out, &f, &self.x_label, &self.y_label);
        for (i, s) in self.series.iter().enumerate() {
            let pts = decimate(&s.points);
            if pts.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (k, (x, y)) in pts.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "" } else { " " }, f.px(*x), f.py(*y));
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<polyline class="series" data-label="{}" fill="none" stroke="{}" stroke-width="1.3"{dash} points="{d}"/>"#,
                escape(&s.label),
                s.color
            );
            let ly = MARGIN_T + 14.0 * i as f64 + 6.0;
            let lx = WIDTH - MARGIN_R + 10.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                s.color,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    /// `(label, value, highlight)`; highlighted bars are drawn in red.
    pub bars: Vec<(String, f64, bool)>,
    /// Optional per-bar marker (e.g. the energy bound).
    pub markers: Vec<Option<f64>>,
}

impl BarChart {
    pub fn render(&self) -> String {
        let max = self
            .bars
            .iter()
            .map(|b| b.1)
            .chain(self.markers.iter().flatten().copied())
            .fold(0.0f64, f64::max);
        let f = Frame { x0: 0.0, x1: self.bars.len().max(1) as f64, y0: 0.0, y1: if max > 0.0 { max * 1.08 } else { 1.0 } };
        let mut out = String::new();
        header(&mut out, &self.title);
        let (l, r, t, b) = (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B);
        let _ = writeln!(out, r#"<g class="axes" stroke="black" fill="none"><rect x="{l}" y="{t}" width="{}" height="{}"/></g>"#, r - l, b - t);
        for y in nice_ticks(f.y0, f.y1, 6) {
            let py = f.py(y);
            let _ = writeln!(out, r##"<line x1="{l}" y1="{py:.2}" x2="{r}" y2="{py:.2}" stroke="#e0e0e0"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##, l - 6.0, py + 4.0, tick_label(y));
        }
        let _ = writeln!(
            out,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            (t + b) / 2.0,
            escape(&self.y_label)
        );
        for (i, (label, value, highlight)) in self.bars.iter().enumerate() {
            let x = f.px(i as f64 + 0.15);
            let w = f.px(i as f64 + 0.85) - x;
            let y = f.py(*value);
            let fill = if *highlight { "#d62728" } else { "#1f77b4" };
            let _ = writeln!(
                out,
                r#"<rect class="bar" data-label="{}" x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{:.2}" fill="{fill}"/><text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                escape(label),
                f.py(0.0) - y,
                x + w / 2.0,
                b + 16.0,
                escape(label)
            );
            if let Some(Some(m)) = self.markers.get(i) {
                let my = f.py(*m);
                let _ = writeln!(out, r#"<line class="marker" x1="{x:.2}" y1="{my:.2}" x2="{:.2}" y2="{my:.2}" stroke="black" stroke-width="2"/>"#, x + w);
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Feasible cells shaded, boundary line on top.
pub fn render_region(region: &FeasibleRegion, title: &str) -> String {
    let g = &region.grid;
    let f = Frame { x0: g.omega_e.0, x1: g.omega_e.1, y0: g.omega_v.0, y1: g.omega_v.1 };
    let mut out = String::new();
    header(&mut out, title);
    let cw = g.cell_width();
    let ch = g.cell_height();
    let _ = writeln!(out, r##"<g class="feasible" fill="#9ecae1" stroke="none">"##);
    for row in 0..g.rows {
        // Merge horizontal runs of feasible cells into one rectangle.
        let mut col = 0;
        while col < g.cols {
            if !region.is_feasible(col, row) {
                col += 1;
                continue;
            }
            let start = col;
            while col < g.cols && region.is_feasible(col, row) {
                col += 1;
            }
            let x = f.px(g.omega_e.0 + start as f64 * cw);
            let x_end = f.px(g.omega_e.0 + col as f64 * cw);
            let y_top = f.py(g.omega_v.0 + (row + 1) as f64 * ch);
            let y_bot = f.py(g.omega_v.0 + row as f64 * ch);
            let _ = writeln!(out, r#"<rect x="{x:.2}" y="{y_top:.2}" width="{:.2}" height="{:.2}"/>"#, x_end - x, y_bot - y_top);
        }
    }
    out.push_str("</g>\n");
    axes(&mut out, &f, "omega_e (1/s^2)", "omega_v (1/s)");
    if region.boundary.len() == 2 {
        let (a, b) = (region.boundary[0], region.boundary[1]);
        let _ = writeln!(
            out,
            r#"<polyline class="boundary" fill="none" stroke="black" stroke-width="2" points="{:.2},{:.2} {:.2},{:.2}"/>"#,
            f.px(a.0),
            f.py(a.1),
            f.px(b.0),
            f.py(b.1)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}">slope {:.4}</text>"#,
        WIDTH - MARGIN_R + 10.0,
        MARGIN_T + 10.0,
        region.slope
    );
    out.push_str("</svg>\n");
    out
}
