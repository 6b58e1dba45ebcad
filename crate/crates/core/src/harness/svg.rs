//! Minimal static SVG charts. Output depends only on the input data.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub struct Series {
    pub name: String,
    /// `None` leaves a gap in a line chart.
    pub points: Vec<(f64, Option<f64>)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = write!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{tx}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n\
         <text x=\"{tx}\" y=\"{xl}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"16\" y=\"{ty}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {ty})\">{y_label}</text>\n",
        w = WIDTH,
        h = HEIGHT,
        tx = num(LEFT + (WIDTH - LEFT - RIGHT) / 2.0),
        xl = num(HEIGHT - 14.0),
        ty = num(TOP + (HEIGHT - TOP - BOTTOM) / 2.0),
        title = escape(title),
        x_label = escape(x_label),
        y_label = escape(y_label),
    );
}

fn axes(out: &mut String, y_max: f64) {
    let (x0, y0, x1, y1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, TOP);
    let _ = writeln!(
        out,
        "<path d=\"M{} {} L{} {} L{} {}\" fill=\"none\" stroke=\"black\"/>",
        num(x0),
        num(y1),
        num(x0),
        num(y0),
        num(x1),
        num(y0)
    );
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = y0 - (y0 - y1) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            num(x0 - 6.0),
            num(y + 4.0),
            num(v)
        );
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            num(x),
            num(y - 10.0),
            PALETTE[i % PALETTE.len()],
            num(x + 18.0),
            num(y),
            escape(name)
        );
    }
}

fn nice_max(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0f64, f64::max);
    if m <= 0.0 {
        1.0
    } else {
        m * 1.1
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (x_min, x_max) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (x_min, x_max) = if x_min.is_finite() && x_max > x_min { (x_min, x_max) } else { (0.0, 1.0) };
    let y_max = nice_max(series.iter().flat_map(|s| s.points.iter().filter_map(|p| p.1)));
    let mut out = String::new();
    header(&mut out, title, x_label, y_label);
    axes(&mut out, y_max);
    let (x0, y0, x1, y1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, TOP);
    for (label, x) in [(x_min, x0), (x_max, x1)] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            num(x),
            num(y0 + 18.0),
            num(label)
        );
    }
    let px = |x: f64| x0 + (x - x_min) / (x_max - x_min) * (x1 - x0);
    let py = |y: f64| y0 - y / y_max * (y0 - y1);
    for (i, s) in series.iter().enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            match y {
                Some(y) => {
                    let _ = write!(d, "{}{} {} ", if pen_down { "L" } else { "M" }, num(px(x)), num(py(y)));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        if !d.is_empty() {
            let _ = writeln!(
                out,
                "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
                d.trim_end(),
                PALETTE[i % PALETTE.len()]
            );
        }
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per category, one bar per series.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[(String, Vec<f64>)]) -> String {
    let y_max = nice_max(series.iter().flat_map(|s| s.1.iter().copied()));
    let mut out = String::new();
    header(&mut out, title, "", y_label);
    axes(&mut out, y_max);
    let (x0, y0, x1, y1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, TOP);
    let group = (x1 - x0) / categories.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for (c, cat) in categories.iter().enumerate() {
        let gx = x0 + group * c as f64 + group * 0.1;
        for (s, (_, values)) in series.iter().enumerate() {
            let v = values.get(c).copied().unwrap_or(0.0);
            let h = v / y_max * (y0 - y1);
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                num(gx + bar * s as f64),
                num(y0 - h),
                num(bar),
                num(h),
                PALETTE[s % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            num(gx + group * 0.4),
            num(y0 + 18.0),
            escape(cat)
        );
    }
    legend(&mut out, &series.iter().map(|s| s.0.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_lift_the_pen() {
        let s = Series {
            name: "a".into(),
            points: vec![(0.0, Some(1.0)), (1.0, None), (2.0, Some(1.0))],
        };
        let svg = line_chart("t", "x", "y", &[s]);
        let path = svg.lines().find(|l| l.starts_with("<path d=\"M") && l.contains("stroke-width")).unwrap();
        assert_eq!(path.matches('M').count(), 2);
        assert!(!path.contains('L'));
    }

    #[test]
    fn text_is_escaped() {
        let svg = bar_chart("a<b & c", "y", &["x\"y".into()], &[("s".into(), vec![1.0])]);
        assert!(svg.contains("a&lt;b &amp; c"));
        assert!(svg.contains("x&quot;y"));
    }
}
