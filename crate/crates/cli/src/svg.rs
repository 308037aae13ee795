//! Minimal deterministic SVG charts: every coordinate is printed with a
//! fixed number of decimals so reruns produce identical bytes.

use std::fmt::Write;

use ltssl_core::evaluation::BoxStats;

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 360.0;
const MARGIN_L: f64 = 76.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Step of roughly `span / 4` rounded to 1, 2 or 5 times a power of ten.
fn nice_step(span: f64) -> f64 {
    let raw = span / 4.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Linear map of a data range onto a pixel range. The value axis is widened
/// to whole tick steps; a degenerate range is widened so a flat series still
/// renders.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    step: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let (lo, hi) = if hi - lo > 1e-12 { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Axis {
            lo,
            hi,
            step: nice_step(hi - lo),
            from,
            to,
        }
    }

    fn rounded(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let a = Axis::new(lo, hi, from, to);
        Axis {
            lo: (a.lo / a.step).floor() * a.step,
            hi: (a.hi / a.step).ceil() * a.step,
            ..a
        }
    }

    fn at(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn ticks(&self) -> Vec<f64> {
        let first = (self.lo / self.step).ceil() as i64;
        let last = (self.hi / self.step + 1e-9).floor() as i64;
        (first..=last).map(|i| i as f64 * self.step).collect()
    }
}

struct Panel {
    x0: f64,
    x: Axis,
    y: Axis,
}

impl Panel {
    fn new(x0: f64, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Panel {
            x0,
            x: Axis::new(x_range.0, x_range.1, x0 + MARGIN_L, x0 + PANEL_W - MARGIN_R),
            y: Axis::rounded(y_range.0, y_range.1, PANEL_H - MARGIN_B, MARGIN_T),
        }
    }

    fn frame(&self, out: &mut String, title: &str, x_label: &str, y_label: &str, x_ticks: &[f64]) {
        let (l, r) = (self.x.from, self.x.to);
        let (b, t) = (self.y.from, self.y.to);
        let _ = writeln!(
            out,
            r##"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
            r - l,
            b - t
        );
        let stride = x_ticks.len().div_ceil(12).max(1);
        for &v in x_ticks.iter().step_by(stride) {
            let x = self.x.at(v);
            let _ = writeln!(
                out,
                r##"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"##,
                b + 16.0,
                tick(v)
            );
        }
        for v in self.y.ticks() {
            let y = self.y.at(v);
            let _ = writeln!(out, r##"<line x1="{l:.2}" y1="{y:.2}" x2="{r:.2}" y2="{y:.2}" stroke="#ddd"/>"##);
            let _ = writeln!(
                out,
                r##"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"##,
                l - 6.0,
                y + 4.0,
                tick(v)
            );
        }
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="20" font-size="14" text-anchor="middle">{}</text>"##,
            self.x0 + PANEL_W / 2.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"##,
            (l + r) / 2.0,
            PANEL_H - 12.0,
            escape(x_label)
        );
        let (cx, cy) = (self.x0 + 14.0, (b + t) / 2.0);
        let _ = writeln!(
            out,
            r##"<text x="{cx:.2}" y="{cy:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 {cx:.2} {cy:.2})">{}</text>"##,
            escape(y_label)
        );
    }
}

fn document(width: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{PANEL_H:.0}\" viewBox=\"0 0 {width:.0} {PANEL_H:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Line chart of one or more series sharing axes, with a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x_range, y_range) = if all().next().is_none() {
        ((0.0, 1.0), (0.0, 1.0))
    } else {
        (range(all().map(|p| p.0)), range(all().map(|p| p.1)))
    };
    let panel = Panel::new(0.0, x_range, (y_range.0.min(0.0), y_range.1));
    let mut body = String::new();
    panel.frame(&mut body, title, x_label, y_label, &panel.x.ticks());
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", panel.x.at(x), panel.y.at(y)))
            .collect();
        let _ = writeln!(
            body,
            r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##,
            points.join(" ")
        );
        let ly = MARGIN_T + 14.0 + 16.0 * i as f64;
        let lx = PANEL_W - MARGIN_R - 150.0;
        let _ = writeln!(
            body,
            r##"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"##,
            lx + 18.0
        );
        let _ = writeln!(
            body,
            r##"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"##,
            lx + 24.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    document(PANEL_W, &body)
}

/// One interval bin of the per-interval figure.
pub struct IntervalColumn {
    pub interval: f64,
    pub errors: BoxStats,
    pub order_accuracy: f64,
}

/// Left: box plot of relative absolute error per interval bin. Right: order
/// accuracy per bin against the chance level.
pub fn interval_figure(title: &str, bins: &[IntervalColumn]) -> String {
    let intervals: Vec<f64> = bins.iter().map(|b| b.interval).collect();
    let (x_lo, x_hi) = if bins.is_empty() { (0.0, 1.0) } else { range(intervals.iter().copied()) };
    let pad = 1.5;
    let y_hi = bins
        .iter()
        .flat_map(|b| b.errors.outliers.iter().copied().chain([b.errors.whisker_high]))
        .fold(1.0f64, f64::max);
    let mut body = String::new();

    let left = Panel::new(0.0, (x_lo - pad, x_hi + pad), (0.0, y_hi));
    left.frame(&mut body, &format!("{title}: relative error"), "interval (months)", "relative absolute error [%]", &intervals);
    let half = 0.3 * (left.x.at(x_lo + 3.0) - left.x.at(x_lo)).abs().min(40.0);
    for b in bins {
        let x = left.x.at(b.interval);
        let e = &b.errors;
        let (q1, q3, med) = (left.y.at(e.q1), left.y.at(e.q3), left.y.at(e.median));
        let (lo, hi) = (left.y.at(e.whisker_low), left.y.at(e.whisker_high));
        let _ = writeln!(body, r##"<line x1="{x:.2}" y1="{lo:.2}" x2="{x:.2}" y2="{q1:.2}" stroke="#333"/>"##);
        let _ = writeln!(body, r##"<line x1="{x:.2}" y1="{q3:.2}" x2="{x:.2}" y2="{hi:.2}" stroke="#333"/>"##);
        for y in [lo, hi] {
            let _ = writeln!(
                body,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#333"/>"##,
                x - half / 2.0,
                x + half / 2.0
            );
        }
        let _ = writeln!(
            body,
            r##"<rect x="{:.2}" y="{q3:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#333"/>"##,
            x - half,
            2.0 * half,
            q1 - q3
        );
        let _ = writeln!(
            body,
            r##"<line x1="{:.2}" y1="{med:.2}" x2="{:.2}" y2="{med:.2}" stroke="#d62728" stroke-width="2"/>"##,
            x - half,
            x + half
        );
        for &o in &e.outliers {
            let _ = writeln!(
                body,
                r##"<circle cx="{x:.2}" cy="{:.2}" r="2" fill="none" stroke="#555"/>"##,
                left.y.at(o)
            );
        }
    }

    let right = Panel::new(PANEL_W, (x_lo - pad, x_hi + pad), (0.0, 1.0));
    right.frame(&mut body, &format!("{title}: order accuracy"), "interval (months)", "accuracy", &intervals);
    let chance = right.y.at(0.5);
    let _ = writeln!(
        body,
        r##"<line x1="{:.2}" y1="{chance:.2}" x2="{:.2}" y2="{chance:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        right.x.from,
        right.x.to
    );
    let points: Vec<String> = bins
        .iter()
        .map(|b| format!("{:.2},{:.2}", right.x.at(b.interval), right.y.at(b.order_accuracy)))
        .collect();
    let _ = writeln!(
        body,
        r##"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"##,
        PALETTE[0],
        points.join(" ")
    );
    for p in &points {
        let (x, y) = p.split_once(',').expect("formatted above");
        let _ = writeln!(body, r##"<circle cx="{x}" cy="{y}" r="3" fill="{}"/>"##, PALETTE[0]);
    }
    document(2.0 * PANEL_W, &body)
}
