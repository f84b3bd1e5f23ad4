//! SVG chart of log-regret curves.

use std::fmt::Write;

use batchei::bench::Summary;

use crate::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Solid lines for the log of the mean regret and dotted lines for the log
/// of the 95% quantile, one pair per strategy.
pub fn regret_svg(summary: &Summary) -> Result<String, CliError> {
    let curves: Vec<_> = summary.strategies.iter().filter(|s| !s.log_mean_regret.is_empty()).collect();
    if curves.is_empty() {
        return Err(CliError::Usage("summary contains no regret curves".into()));
    }
    let n = curves.iter().map(|s| s.log_mean_regret.len()).max().unwrap_or(1);
    let values = curves
        .iter()
        .flat_map(|s| s.log_mean_regret.iter().chain(&s.log_q95_regret))
        .copied()
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return Err(CliError::Usage("summary contains no finite log-regret".into()));
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |k: usize| {
        if n == 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * k as f64 / (n - 1) as f64
        }
    };
    let y_of = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    )
    .unwrap();
    for k in 0..n {
        let x = x_of(k);
        writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{k}</text>"#, TOP + plot_h + 18.0).unwrap();
    }
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0,
            y_of(v) + 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">batch index</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">log regret</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    )
    .unwrap();

    for (c, s) in curves.iter().enumerate() {
        let color = COLORS[c % COLORS.len()];
        for (series, dash) in [(&s.log_mean_regret, ""), (&s.log_q95_regret, r#" stroke-dasharray="2 4""#)] {
            let pts: Vec<String> = series
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(k, &v)| format!("{:.2},{:.2}", x_of(k), y_of(v)))
                .collect();
            writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                pts.join(" ")
            )
            .unwrap();
            if series.len() == 1 && series[0].is_finite() {
                writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                    x_of(0),
                    y_of(series[0])
                )
                .unwrap();
            }
        }
        let ly = TOP + 16.0 + 36.0 * c as f64;
        let lx = WIDTH - RIGHT + 16.0;
        writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2" stroke-dasharray="2 4"/>"#,
            ly + 14.0,
            lx + 24.0,
            ly + 14.0
        )
        .unwrap();
        writeln!(svg, r#"<text x="{}" y="{}">{} mean</text>"#, lx + 30.0, ly + 4.0, s.strategy).unwrap();
        writeln!(svg, r#"<text x="{}" y="{}">{} 95%</text>"#, lx + 30.0, ly + 18.0, s.strategy).unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
