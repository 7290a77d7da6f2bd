//! Minimal SVG line plots with a logarithmic value axis.

use std::fmt::Write;

use delearn_core::simkit::TimeSeries;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Render `series` (every column except time) against `t`. Non-positive and
/// non-finite samples break the curve instead of being clamped.
pub fn render(title: &str, series: &TimeSeries) -> String {
    let t = series.times();
    let columns: Vec<(String, Vec<f64>)> = series
        .names()
        .iter()
        .filter_map(|n| series.column(n).map(|c| (n.clone(), c)))
        .collect();

    let (t0, t1) = match (t.first(), t.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let positive = columns.iter().flat_map(|(_, c)| c.iter()).copied().filter(|v| v.is_finite() && *v > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (d0, d1) = if lo.is_finite() {
        let (a, b) = (lo.log10().floor(), hi.log10().ceil());
        (a, if b > a { b } else { a + 1.0 })
    } else {
        (-1.0, 0.0)
    };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x = |v: f64| LEFT + (v - t0) / (t1 - t0) * pw;
    let y = |v: f64| TOP + (d1 - v.log10()) / (d1 - d0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));

    for k in 0..=(d1 - d0) as i32 {
        let decade = d0 + k as f64;
        let py = y(10f64.powf(decade));
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"#, LEFT - 6.0, py + 4.0, decade);
    }
    for k in 0..=5 {
        let tv = t0 + (t1 - t0) * k as f64 / 5.0;
        let px = x(tv);
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#eee"/>"##, TOP + ph);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, trim(tv));
    }
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0);

    for (i, (name, col)) in columns.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, seg.join(" "));
            }
            seg.clear();
        };
        for (&tv, &v) in t.iter().zip(col) {
            if v.is_finite() && v > 0.0 {
                segment.push(format!("{:.2},{:.2}", x(tv), y(v)));
            } else {
                flush(&mut segment, &mut s);
            }
        }
        flush(&mut segment, &mut s);
        let ly = TOP + 16.0 * (i as f64 + 1.0);
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 20.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.1}">{}</text>"#, lx + 26.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn trim(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_split_the_polyline() {
        let mut ts = TimeSeries::new(vec!["a".into()]);
        for (k, v) in [1.0, 0.1, 0.0, 0.01, 0.001].into_iter().enumerate() {
            ts.push(k as f64, vec![v]).unwrap();
        }
        let svg = render("gap <test>", &ts);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("gap &lt;test&gt;"));
        assert!(svg.contains(">1e-3<"));
        assert!(svg.contains(">1e0<"));
    }

    #[test]
    fn empty_series_still_renders() {
        let ts = TimeSeries::new(vec!["a".into()]);
        let svg = render("empty", &ts);
        assert!(svg.starts_with("<svg"));
        assert!(!svg.contains("<polyline"));
    }
}
