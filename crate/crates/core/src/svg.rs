//! Minimal standalone SVG line charts.
//!
//! When the y values span more than three decades the axis switches to
//! `sign(y)·log10(1 + |y|)`, which keeps negative fairness values plottable.

use std::fmt::Write;

use crate::pricing::PlanKind;
use crate::sweep::SweepRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 70.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn signed_log(y: f64) -> f64 {
    y.signum() * y.abs().ln_1p() / std::f64::consts::LN_10
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl Chart {
    /// Whether the y axis uses the signed log transform.
    pub fn log_y(&self) -> bool {
        let (lo, hi) = span(self.finite_points().map(|p| p.1));
        let (small, large) = (lo.abs().min(hi.abs()), lo.abs().max(hi.abs()));
        (lo < 0.0 && hi > 0.0 && large > 1e3) || large > 1e3 * small.max(1e-300) && hi - lo > 1e3
    }

    fn finite_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
    }

    /// Renders the chart; non-finite points are skipped.
    pub fn render(&self) -> String {
        let log_y = self.log_y();
        let ty = |y: f64| if log_y { signed_log(y) } else { y };
        let (x0, x1) = span(self.finite_points().map(|p| p.0));
        let (y0, y1) = span(self.finite_points().map(|p| ty(p.1)));
        let plot_w = WIDTH - 2.0 * MARGIN;
        let plot_h = HEIGHT - 2.0 * MARGIN;
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| HEIGHT - MARGIN - (ty(y) - y0) / (y1 - y0) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<path d="M{MARGIN} {MARGIN} V{b} H{r}" fill="none" stroke="black"/>"#,
            b = HEIGHT - MARGIN,
            r = WIDTH - MARGIN
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let px = MARGIN + f * plot_w;
            let py = HEIGHT - MARGIN - f * plot_h;
            let _ = writeln!(
                out,
                r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
                HEIGHT - MARGIN + 18.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{py:.2}" text-anchor="end">{}</text>"#,
                MARGIN - 6.0,
                tick(yv)
            );
        }
        let y_label = if log_y {
            format!("{} (signed log10)", self.y_label)
        } else {
            self.y_label.clone()
        };
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 20.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
            HEIGHT / 2.0,
            escape(&y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = MARGIN + 16.0 * k as f64;
            let lx = WIDTH - MARGIN - 150.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                lx + 18.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}">{}</text>"#,
                lx + 24.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Fairness against revenue, one polyline per (plan, ν), traced along the
/// swept parameter.
pub fn tradeoff_chart(rows: &[SweepRow]) -> Chart {
    let mut series: Vec<(PlanKind, f64, Series)> = Vec::new();
    for row in rows {
        let pos = series.iter().position(|(p, nu, _)| *p == row.plan && *nu == row.nu);
        let idx = pos.unwrap_or_else(|| {
            series.push((
                row.plan,
                row.nu,
                Series {
                    name: format!("{} ν={}", row.plan, row.nu),
                    points: Vec::new(),
                },
            ));
            series.len() - 1
        });
        series[idx].2.points.push((row.revenue, row.fairness));
    }
    let parameter = rows.first().map_or("", |r| r.parameter.as_str());
    Chart {
        title: format!("fairness vs revenue over {parameter}"),
        x_label: "revenue".into(),
        y_label: "fairness".into(),
        series: series.into_iter().map(|s| s.2).collect(),
    }
}
