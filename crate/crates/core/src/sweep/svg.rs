//! Minimal SVG line chart: axes with ticks, one polyline per series and
//! vertical error bars.

use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Half-height of the error bar; 0 draws none.
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    pub log_x: bool,
    /// Fixed y range; otherwise fitted to the data and error bars.
    pub y_range: Option<(f64, f64)>,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            width: 640.0,
            height: 420.0,
            log_x: false,
            y_range: None,
        }
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const MARGIN: (f64, f64, f64, f64) = (70.0, 30.0, 40.0, 60.0); // left, right, top, bottom

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

/// Renders the chart as a standalone SVG document. Non-positive x values are
/// dropped on a log axis.
pub fn line_chart(series: &[Series], opts: &ChartOptions) -> String {
    let tx = |x: f64| if opts.log_x { x.log10() } else { x };
    let usable = |p: &&Point| p.x.is_finite() && p.y.is_finite() && (!opts.log_x || p.x > 0.0);
    let pts: Vec<&Point> = series.iter().flat_map(|s| s.points.iter()).filter(usable).collect();

    let (x_lo, x_hi) = span(
        pts.iter().map(|p| tx(p.x)).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| tx(p.x)).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y_lo, y_hi) = opts.y_range.unwrap_or_else(|| {
        span(
            pts.iter().map(|p| p.y - p.err.abs()).fold(f64::INFINITY, f64::min),
            pts.iter().map(|p| p.y + p.err.abs()).fold(f64::NEG_INFINITY, f64::max),
        )
    });
    let (x_lo, x_hi) = if pts.is_empty() { (0.0, 1.0) } else { (x_lo, x_hi) };
    let (y_lo, y_hi) = if pts.is_empty() && opts.y_range.is_none() { (0.0, 1.0) } else { (y_lo, y_hi) };

    let (ml, mr, mt, mb) = MARGIN;
    let (pw, ph) = (opts.width - ml - mr, opts.height - mt - mb);
    let px = |x: f64| ml + (tx(x) - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| mt + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;

    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        opts.width, opts.height, opts.width, opts.height
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        opts.width / 2.0,
        escape(&opts.title)
    );
    let _ = writeln!(w, r#"<path d="M{ml} {mt} V{} H{}" fill="none" stroke="black"/>"#, mt + ph, ml + pw);

    let x_ticks: Vec<f64> = if opts.log_x {
        (x_lo.ceil() as i32..=x_hi.floor() as i32).map(|e| 10f64.powi(e)).collect()
    } else {
        linear_ticks(x_lo, x_hi)
    };
    for t in x_ticks {
        let x = px(t);
        let _ =
            writeln!(w, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, mt + ph, mt + ph + 5.0);
        let _ = writeln!(w, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, mt + ph + 18.0, fmt_tick(t));
    }
    for t in linear_ticks(y_lo, y_hi) {
        let y = py(t);
        let _ = writeln!(w, r#"<line x1="{}" y1="{y:.2}" x2="{ml}" y2="{y:.2}" stroke="black"/>"#, ml - 5.0);
        let _ = writeln!(w, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, ml - 8.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        opts.height - 15.0,
        escape(&opts.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(&opts.y_label)
    );

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<&Point> = ser.points.iter().filter(usable).collect();
        let _ = writeln!(w, r#"<g class="series" stroke="{color}" fill="{color}">"#);
        if pts.len() > 1 {
            let coords: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.x), py(p.y))).collect();
            let _ = writeln!(w, r#"<polyline points="{}" fill="none"/>"#, coords.join(" "));
        }
        for p in &pts {
            let (x, y) = (px(p.x), py(p.y));
            if p.err > 0.0 {
                let (top, bot) = (py(p.y + p.err), py(p.y - p.err));
                let _ = writeln!(
                    w,
                    r#"<path class="err" d="M{x:.2} {top:.2} V{bot:.2} M{:.2} {top:.2} H{:.2} M{:.2} {bot:.2} H{:.2}"/>"#,
                    x - 4.0,
                    x + 4.0,
                    x - 4.0,
                    x + 4.0
                );
            }
            let _ = writeln!(w, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3"/>"#);
        }
        let ly = mt + 10.0 + 16.0 * i as f64;
        let _ = writeln!(w, r#"<rect x="{}" y="{:.2}" width="10" height="10"/>"#, ml + 10.0, ly - 9.0);
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{ly:.2}" stroke="none" fill="black">{}</text>"#,
            ml + 26.0,
            escape(&ser.label)
        );
        let _ = writeln!(w, "</g>");
    }
    let _ = writeln!(w, "</svg>");
    s
}
