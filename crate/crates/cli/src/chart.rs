//! Standalone SVG charts rendered from an experiment report.

use std::fmt::Write;

use signstorm::harness::ExperimentReport;
use signstorm::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ChartKind {
    /// Median headline metric per optimizer with a band up to the `1 − δ` quantile.
    ConvergenceBands,
    /// Log-log medians with the fitted power law.
    RateFit,
}

impl ChartKind {
    pub fn file_name(self) -> &'static str {
        match self {
            ChartKind::ConvergenceBands => "convergence_bands.svg",
            ChartKind::RateFit => "rate_fit.svg",
        }
    }
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf",
];

/// Slope with a typographic minus sign, e.g. `−0.333`.
pub fn format_slope(slope: f64) -> String {
    let s = format!("{slope:.3}");
    match s.strip_prefix('-') {
        Some(rest) => format!("\u{2212}{rest}"),
        None => s,
    }
}

struct Series {
    method: Method,
    /// `(T, median, upper)`.
    points: Vec<(f64, f64, f64)>,
    slope: Option<f64>,
    intercept: f64,
}

fn collect_series(report: &ExperimentReport) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for cell in &report.cells {
        let idx = match out.iter().position(|s| s.method == cell.optimizer) {
            Some(i) => i,
            None => {
                let fit = report.rate_fit(cell.optimizer);
                out.push(Series {
                    method: cell.optimizer,
                    points: Vec::new(),
                    slope: fit.map(|f| f.slope),
                    intercept: fit.map(|f| f.intercept).unwrap_or(0.0),
                });
                out.len() - 1
            }
        };
        let (Some(median), Some(upper)) = (cell.median(), cell.quantiles.last()) else {
            continue;
        };
        if median > 0.0 && upper.value > 0.0 {
            out[idx]
                .points
                .push((cell.horizon as f64, median, upper.value));
        }
    }
    out
}

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
}

impl Axes {
    fn px(&self, t: f64) -> f64 {
        LEFT + (t.log10() - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v.log10() - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v.log10()), hi.max(v.log10()))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.05);
    (lo - pad, hi + pad)
}

fn axis_ticks(range: (f64, f64)) -> Vec<f64> {
    let ticks: Vec<f64> = (range.0.ceil() as i32..=range.1.floor() as i32)
        .map(f64::from)
        .collect();
    if ticks.len() >= 2 {
        ticks
    } else {
        let mid = 0.5 * (range.0 + range.1);
        vec![range.0 + 0.1 * (range.1 - range.0), mid, range.1 - 0.1 * (range.1 - range.0)]
    }
}

fn tick_label(log_value: f64) -> String {
    if (log_value - log_value.round()).abs() < 1e-9 {
        format!("1e{}", log_value.round() as i32)
    } else {
        format!("{:.3e}", 10f64.powf(log_value))
    }
}

fn frame(svg: &mut String, axes: &Axes, title: &str, y_label: &str) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{:.1}" y="24" text-anchor="middle" font-size="16">{title}</text>"#,
        0.5 * (x0 + x1)
    );
    let _ = writeln!(
        svg,
        r##"<rect class="plot-area" x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        x1 - x0,
        y0 - y1
    );
    for t in axis_ticks(axes.x) {
        let x = axes.px(10f64.powf(t));
        let _ = writeln!(
            svg,
            r##"<line class="tick" x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/><text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"##,
            y0 + 5.0,
            y0 + 18.0,
            tick_label(t)
        );
    }
    for t in axis_ticks(axes.y) {
        let y = axes.py(10f64.powf(t));
        let _ = writeln!(
            svg,
            r##"<line class="tick" x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{}</text>"##,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="axis-label" x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">horizon T (log scale)</text>"#,
        0.5 * (x0 + x1),
        HEIGHT - 18.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis-label" transform="translate(20 {:.1}) rotate(-90)" text-anchor="middle" font-size="13">{y_label}</text>"#,
        0.5 * (y0 + y1)
    );
}

fn legend(svg: &mut String, entries: &[(String, &str)]) {
    let x = WIDTH - RIGHT + 16.0;
    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (i, (label, colour)) in entries.iter().enumerate() {
        let y = TOP + 14.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><rect x="{x:.1}" y="{:.1}" width="14" height="10" fill="{colour}"/><text x="{:.1}" y="{y:.1}" font-size="12">{}</text></g>"#,
            y - 9.0,
            x + 20.0,
            escape(label)
        );
    }
    let _ = writeln!(svg, "</g>");
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn no_data(svg: &mut String) {
    let _ = writeln!(
        svg,
        r##"<text class="no-data" x="{:.1}" y="{:.1}" text-anchor="middle" font-size="18" fill="#888">no data</text>"##,
        0.5 * (LEFT + WIDTH - RIGHT),
        0.5 * (TOP + HEIGHT - BOTTOM)
    );
}

fn legend_label(s: &Series) -> String {
    match s.slope {
        Some(slope) => format!("{} (slope {})", s.method, format_slope(slope)),
        None => s.method.to_string(),
    }
}

/// Renders `kind` for `report` as a complete SVG document.
pub fn render(report: &ExperimentReport, kind: ChartKind) -> String {
    let series = collect_series(report);
    let has_data = series.iter().any(|s| !s.points.is_empty());
    let axes = Axes {
        x: padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0))),
        y: padded_range(
            series
                .iter()
                .flat_map(|s| s.points.iter().flat_map(|p| [p.1, p.2])),
        ),
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let upper_level = report
        .config
        .quantile_levels
        .last()
        .copied()
        .unwrap_or(1.0 - report.config.delta);
    match kind {
        ChartKind::ConvergenceBands => frame(
            &mut svg,
            &axes,
            &format!("min_t ||grad F(x_t)||_1: median and q({upper_level:.3}) band"),
            "min_t ||grad F(x_t)||_1",
        ),
        ChartKind::RateFit => frame(
            &mut svg,
            &axes,
            "median min_t ||grad F(x_t)||_1 vs T with least-squares fit",
            "median metric",
        ),
    }
    if !has_data {
        no_data(&mut svg);
    }
    let mut entries = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        entries.push((legend_label(s), colour));
        if s.points.is_empty() {
            continue;
        }
        let name = s.method.name();
        match kind {
            ChartKind::ConvergenceBands => {
                let mut poly: Vec<String> = s
                    .points
                    .iter()
                    .map(|p| format!("{:.2},{:.2}", axes.px(p.0), axes.py(p.2)))
                    .collect();
                poly.extend(
                    s.points
                        .iter()
                        .rev()
                        .map(|p| format!("{:.2},{:.2}", axes.px(p.0), axes.py(p.1))),
                );
                let _ = writeln!(
                    svg,
                    r#"<polygon class="band" data-optimizer="{name}" points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
                    poly.join(" ")
                );
                let line: Vec<String> = s
                    .points
                    .iter()
                    .map(|p| format!("{:.2},{:.2}", axes.px(p.0), axes.py(p.1)))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline class="median" data-optimizer="{name}" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
                    line.join(" ")
                );
            }
            ChartKind::RateFit => {
                for p in &s.points {
                    let _ = writeln!(
                        svg,
                        r#"<circle class="point" data-optimizer="{name}" cx="{:.2}" cy="{:.2}" r="4" fill="{colour}"/>"#,
                        axes.px(p.0),
                        axes.py(p.1)
                    );
                }
                if let Some(slope) = s.slope {
                    let (t0, t1) = (s.points[0].0, s.points[s.points.len() - 1].0);
                    let f = |t: f64| (s.intercept + slope * t.ln()).exp();
                    let _ = writeln!(
                        svg,
                        r#"<line class="fit" data-optimizer="{name}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-dasharray="6 4"/>"#,
                        axes.px(t0),
                        axes.py(f(t0)),
                        axes.px(t1),
                        axes.py(f(t1))
                    );
                    let _ = writeln!(
                        svg,
                        r#"<text class="slope" x="{:.2}" y="{:.2}" font-size="12" fill="{colour}">slope {}</text>"#,
                        axes.px(t1) + 4.0,
                        axes.py(f(t1)) - 6.0,
                        format_slope(slope)
                    );
                }
            }
        }
    }
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    svg
}
