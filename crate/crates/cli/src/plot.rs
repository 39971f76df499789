//! Minimal self-contained SVG plotting: line series, bar charts, and
//! scatter rasters with axes, ticks, and legends. No external renderer; the
//! output is deterministic so golden files diff cleanly.

use std::fmt::Write;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    width: f64,
    height: f64,
    series: Vec<Series>,
    bars: Vec<(f64, f64, String)>,
    dots: Vec<(f64, f64, &'static str)>,
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
}

const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 46.0;

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Plot {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            width: 560.0,
            height: 360.0,
            series: Vec::new(),
            bars: Vec::new(),
            dots: Vec::new(),
            x_range: None,
            y_range: None,
        }
    }

    pub fn line(&mut self, label: &str, color: &'static str, points: Vec<(f64, f64)>) {
        self.series.push(Series {
            label: label.into(),
            color,
            points,
        });
    }

    /// Bar at x with height y (bar width inferred from spacing).
    pub fn bar(&mut self, x: f64, y: f64, color: &str) {
        self.bars.push((x, y, color.to_string()));
    }

    pub fn dot(&mut self, x: f64, y: f64, color: &'static str) {
        self.dots.push((x, y, color));
    }

    pub fn x_range(&mut self, lo: f64, hi: f64) {
        self.x_range = Some((lo, hi));
    }

    pub fn y_range(&mut self, lo: f64, hi: f64) {
        self.y_range = Some((lo, hi));
    }

    fn data_bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
        }
        for &(x, y, _) in &self.bars {
            xs.push(x);
            ys.push(y);
            ys.push(0.0);
        }
        for &(x, y, _) in &self.dots {
            xs.push(x);
            ys.push(y);
        }
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() && hi.is_finite() && hi > lo {
                (lo, hi)
            } else if lo.is_finite() {
                (lo - 0.5, lo + 0.5)
            } else {
                (0.0, 1.0)
            }
        };
        (
            self.x_range.unwrap_or_else(|| span(&xs)),
            self.y_range.unwrap_or_else(|| pad(span(&ys))),
        )
    }

    pub fn render(&self, deterministic: bool) -> String {
        let ((x0, x1), (y0, y1)) = self.data_bounds();
        let plot_w = self.width - MARGIN_L - MARGIN_R;
        let plot_h = self.height - MARGIN_T - MARGIN_B;
        let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
            self.width, self.height, self.width, self.height
        );
        if !deterministic {
            let _ = writeln!(
                svg,
                "<!-- generated by bundle-sim {} -->",
                env!("CARGO_PKG_VERSION")
            );
        }
        let _ = writeln!(
            svg,
            "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>",
            self.width, self.height
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            MARGIN_L + plot_w / 2.0,
            escape(&self.title)
        );

        // frame and ticks
        let _ = writeln!(
            svg,
            "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" fill=\"none\" stroke=\"black\"/>"
        );
        for (frac, value) in ticks(x0, x1) {
            let x = MARGIN_L + frac * plot_w;
            let _ = writeln!(
                svg,
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
                MARGIN_T + plot_h,
                MARGIN_T + plot_h + 5.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
                MARGIN_T + plot_h + 18.0,
                fmt_tick(value)
            );
        }
        for (frac, value) in ticks(y0, y1) {
            let y = MARGIN_T + (1.0 - frac) * plot_h;
            let _ = writeln!(
                svg,
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{MARGIN_L}\" y2=\"{y:.1}\" stroke=\"black\"/>",
                MARGIN_L - 5.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
                MARGIN_L - 8.0,
                y + 4.0,
                fmt_tick(value)
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            MARGIN_L + plot_w / 2.0,
            self.height - 8.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            "<text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
            MARGIN_T + plot_h / 2.0,
            MARGIN_T + plot_h / 2.0,
            escape(&self.y_label)
        );

        // bars first (background), then lines, then dots
        if !self.bars.is_empty() {
            let bar_w = bar_width(&self.bars) / (x1 - x0) * plot_w;
            for (x, y, color) in &self.bars {
                let h = (py(0.0f64.max(y0)) - py(*y)).max(0.0);
                let _ = writeln!(
                    svg,
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{color}\" fill-opacity=\"0.75\"/>",
                    px(*x) - bar_w / 2.0,
                    py(*y),
                    bar_w,
                    h
                );
            }
        }
        for s in &self.series {
            let path: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y.clamp(y0, y1))))
                .collect();
            if path.len() >= 2 {
                let _ = writeln!(
                    svg,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                    path.join(" "),
                    s.color
                );
            }
        }
        for &(x, y, color) in &self.dots {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3.2\" fill=\"{color}\"/>",
                px(x),
                py(y)
            );
        }

        // legend
        let mut ly = MARGIN_T + 14.0;
        for s in self.series.iter().filter(|s| !s.label.is_empty()) {
            let _ = writeln!(
                svg,
                "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"2\"/>",
                MARGIN_L + plot_w - 120.0,
                MARGIN_L + plot_w - 98.0,
                s.color
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                MARGIN_L + plot_w - 92.0,
                ly + 4.0,
                escape(&s.label)
            );
            ly += 16.0;
        }

        svg.push_str("</svg>\n");
        svg
    }
}

fn pad((lo, hi): (f64, f64)) -> (f64, f64) {
    let span = (hi - lo).max(1e-12);
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// Up to six round-number ticks as (fraction along axis, value).
fn ticks(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 6.0)
        .unwrap_or(mag * 10.0);
    let mut out = Vec::new();
    let mut v = (lo / step).ceil() * step;
    while v <= hi + 1e-9 * span {
        out.push(((v - lo) / span, v));
        v += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn bar_width(bars: &[(f64, f64, String)]) -> f64 {
    let mut xs: Vec<f64> = bars.iter().map(|b| b.0).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    xs.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
        * 0.8
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
