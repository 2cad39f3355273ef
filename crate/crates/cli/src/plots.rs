//! Standalone SVG emission: trajectory overlays and per-frame traces.
//! Hand-rolled on purpose; the files carry no external references.

use std::fmt::Write as _;

pub const WIDTH: f64 = 900.0;
pub const HEIGHT: f64 = 560.0;
const MARGIN: f64 = 50.0;

/// Mode palette plus reserved colors for truth and prior.
pub fn series_color(i: usize) -> &'static str {
    const COLORS: [&str; 7] = [
        "#c0392b", "#2471a3", "#1e8449", "#b7950b", "#7d3c98", "#d35400", "#148f77",
    ];
    COLORS[i % COLORS.len()]
}

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series<'_>]) -> (f64, f64, f64, f64) {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
    }
    if !min_x.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    // Degenerate spans still need a nonzero extent to map through.
    if max_x - min_x < 1e-12 {
        max_x = min_x + 1.0;
    }
    if max_y - min_y < 1e-12 {
        max_y = min_y + 1.0;
    }
    (min_x, max_x, min_y, max_y)
}

/// Renders polyline series into a framed chart. `equal_scale` keeps meters
/// square (trajectory overlays); traces stretch each axis independently.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>], equal_scale: bool) -> String {
    let (min_x, max_x, min_y, max_y) = bounds(series);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let (mut sx, mut sy) = (plot_w / (max_x - min_x), plot_h / (max_y - min_y));
    if equal_scale {
        let s = sx.min(sy);
        sx = s;
        sy = s;
    }
    let px = |x: f64| MARGIN + (x - min_x) * sx;
    // SVG y grows downward; world y grows upward.
    let py = |y: f64| HEIGHT - MARGIN - (y - min_y) * sy;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title),
    );
    let _ = write!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"#888\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label),
    );
    // Corner tick labels beat a full axis for a diagnostic chart.
    let _ = write!(
        svg,
        "<text x=\"{MARGIN}\" y=\"{:.1}\" font-size=\"11\">{:.3}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{:.3}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{:.3}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{:.3}</text>\n",
        HEIGHT - MARGIN + 16.0,
        min_x,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
        max_x,
        MARGIN - 4.0,
        HEIGHT - MARGIN,
        min_y,
        MARGIN - 4.0,
        MARGIN + 10.0,
        max_y,
    );

    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (k, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(d, "{}{:.3},{:.3} ", if k == 0 { "M" } else { "L" }, px(x), py(y));
        }
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = write!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/>\n",
            d.trim_end(),
            s.color,
        );
        let ly = MARGIN + 18.0 + 18.0 * i as f64;
        let _ = write!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"3\"{dash}/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            MARGIN + 8.0,
            MARGIN + 36.0,
            s.color,
            MARGIN + 42.0,
            ly + 4.0,
            escape(s.name),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
