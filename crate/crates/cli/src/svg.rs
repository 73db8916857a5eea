//! Minimal direct-to-SVG charts: line plots and heatmaps, no external
//! plotting dependency. Figures are batch artifacts, not a UI.

use std::fmt::Write as _;

pub const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const W: f64 = 860.0;
const H: f64 = 520.0;
const ML: f64 = 70.0;
const MR: f64 = 150.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let span = hi - lo;
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    } * mag;
    let start = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= hi + step * 1e-9 {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// One named line of a chart.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: &'a [(f64, f64)],
}

/// Multi-series line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in s.points {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    if !x_lo.is_finite() {
        x_lo = 0.0;
        x_hi = 1.0;
    }
    if !y_lo.is_finite() {
        y_lo = 0.0;
        y_hi = 1.0;
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    let px = |x: f64| ML + (x - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y_lo) / (y_hi - y_lo) * (H - MT - MB);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="13">"#
    );
    let _ = write!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="16">{}</text>"#,
        ML + (W - ML - MR) / 2.0,
        title
    );

    for t in nice_ticks(x_lo, x_hi, 8) {
        let x = px(t);
        let _ = write!(
            svg,
            r##"<line x1="{x:.1}" y1="{MT}" x2="{x:.1}" y2="{:.1}" stroke="#e0e0e0"/>"##,
            H - MB
        );
        let _ = write!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            H - MB + 18.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(y_lo, y_hi, 6) {
        let y = py(t);
        let _ = write!(
            svg,
            r##"<line x1="{ML}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##,
            W - MR
        );
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ML - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = write!(
        svg,
        r#"<rect x="{ML}" y="{MT}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        W - ML - MR,
        H - MT - MB
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        ML + (W - ML - MR) / 2.0,
        H - 12.0,
        x_label
    );
    let _ = write!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        MT + (H - MT - MB) / 2.0,
        MT + (H - MT - MB) / 2.0,
        y_label
    );

    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let mut d = String::new();
        for (k, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, px(x), py(y));
        }
        let _ = write!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            d.trim_end()
        );
        let ly = MT + 18.0 * i as f64 + 10.0;
        let _ = write!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            W - MR + 10.0,
            W - MR + 34.0
        );
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            W - MR + 40.0,
            ly + 4.0,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn colormap(t: f64) -> String {
    // dark blue -> cyan -> yellow -> red
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 1.0 / 3.0 {
        let u = 3.0 * t;
        (0.0, u, 0.6 + 0.4 * u)
    } else if t < 2.0 / 3.0 {
        let u = 3.0 * t - 1.0;
        (u, 1.0, 1.0 - u)
    } else {
        let u = 3.0 * t - 2.0;
        (1.0, 1.0 - u, 0.0)
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        (r * 255.0) as u8,
        (g * 255.0) as u8,
        (b * 255.0) as u8
    )
}

/// Heatmap with a logarithmic color scale and lane marks overlaid.
pub fn heatmap(
    title: &str,
    xs: &[f64],
    ys: &[f64],
    values: &[Vec<f64>],
    lane_marks: &[f64],
) -> String {
    let x_lo = xs[0];
    let x_hi = *xs.last().unwrap();
    let y_lo = ys[0];
    let y_hi = *ys.last().unwrap();
    let v_max = values
        .iter()
        .flat_map(|row| row.iter().copied())
        .fold(f64::MIN, f64::max)
        .max(1e-9);
    let v_min = values
        .iter()
        .flat_map(|row| row.iter().copied())
        .fold(f64::MAX, f64::min)
        .max(1e-9);

    let px = |x: f64| ML + (x - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y_lo) / (y_hi - y_lo) * (H - MT - MB);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="13">"#
    );
    let _ = write!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="16">{}</text>"#,
        ML + (W - ML - MR) / 2.0,
        title
    );
    let cw = (W - ML - MR) / (xs.len() - 1).max(1) as f64;
    let ch = (H - MT - MB) / (ys.len() - 1).max(1) as f64;
    let log_span = (v_max / v_min).ln().max(1e-9);
    for (j, row) in values.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            let t = (v.max(v_min) / v_min).ln() / log_span;
            let _ = write!(
                svg,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                px(xs[i]) - cw / 2.0,
                py(ys[j]) - ch / 2.0,
                cw + 0.5,
                ch + 0.5,
                colormap(t)
            );
        }
    }
    for &mark in lane_marks {
        let y = py(mark);
        let _ = write!(
            svg,
            r#"<line x1="{ML}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="white" stroke-dasharray="10,8" stroke-width="1.5"/>"#,
            W - MR
        );
    }
    for t in nice_ticks(x_lo, x_hi, 8) {
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(t),
            H - MB + 18.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(y_lo, y_hi, 6) {
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ML - 6.0,
            py(t) + 4.0,
            fmt_tick(t)
        );
    }
    let _ = write!(
        svg,
        r#"<rect x="{ML}" y="{MT}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        W - ML - MR,
        H - MT - MB
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">x [m]</text>"#,
        ML + (W - ML - MR) / 2.0,
        H - 12.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_wellformed() {
        let pts: Vec<(f64, f64)> = (0..50).map(|k| (k as f64 * 0.1, (k as f64 * 0.3).sin())).collect();
        let svg = line_chart(
            "steering",
            "t [s]",
            "delta [rad]",
            &[Series {
                name: "proposed",
                points: &pts,
            }],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("proposed"));
        assert!(svg.matches("<path").count() == 1);
    }

    #[test]
    fn heatmap_covers_grid() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = (0..10).map(|j| j as f64 * 0.5).collect();
        let vals: Vec<Vec<f64>> = ys
            .iter()
            .map(|y| xs.iter().map(|x| 1.0 + x * y).collect())
            .collect();
        let svg = heatmap("field", &xs, &ys, &vals, &[1.0]);
        assert!(svg.matches("<rect").count() >= 200);
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 10.0, 8);
        assert!(t.len() >= 5 && t.len() <= 12);
        assert!(t[0] >= 0.0 && *t.last().unwrap() <= 10.0 + 1e-9);
    }
}
