//! Minimal self-contained SVG line charts.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

/// Line chart of every `(label, y)` series against `x`. Non-finite points are skipped.
pub fn line_chart(title: &str, x_label: &str, x: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let finite = |v: &&f64| v.is_finite();
    let (x0, x1) = bounds(x.iter().filter(finite));
    let (y0, y1) = bounds(series.iter().flat_map(|(_, y)| y.iter()).filter(finite));
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    writeln!(
        s,
        r#"<path d="M{m},{m} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 10.0, escape(x_label)).unwrap();
    for (v, anchor, px, py) in [(x0, "start", sx(x0), HEIGHT - MARGIN + 15.0), (x1, "end", sx(x1), HEIGHT - MARGIN + 15.0)] {
        writeln!(s, r#"<text x="{px:.1}" y="{py:.1}" text-anchor="{anchor}">{}</text>"#, tick(v)).unwrap();
    }
    for v in [y0, y1] {
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN - 5.0, sy(v) + 4.0, tick(v)).unwrap();
    }
    for (k, (label, y)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        let mut pen_up = true;
        for (xv, yv) in x.iter().zip(y) {
            if !(xv.is_finite() && yv.is_finite()) {
                pen_up = true;
                continue;
            }
            write!(d, "{}{:.2},{:.2} ", if pen_up { "M" } else { "L" }, sx(*xv), sy(*yv)).unwrap();
            pen_up = false;
        }
        writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end()).unwrap();
        let ly = MARGIN + 15.0 * k as f64;
        writeln!(s, r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#, WIDTH - MARGIN, escape(label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn tick(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
