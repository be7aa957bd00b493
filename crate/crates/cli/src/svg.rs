//! Minimal SVG line charts on log-log axes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 80.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLogChart {
    pub title: String,
    pub caption: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Decade range covering `[lo, hi]`.
fn decades(lo: f64, hi: f64) -> (i32, i32) {
    let a = lo.log10().floor() as i32;
    let mut b = hi.log10().ceil() as i32;
    if b == a {
        b += 1;
    }
    (a, b)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LogLogChart {
    pub fn render(&self) -> String {
        // non-positive values have no place on a log axis
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
            .collect();
        let (xlo, xhi, ylo, yhi) = if pts.is_empty() {
            (1.0, 10.0, 1.0, 10.0)
        } else {
            pts.iter().fold((f64::MAX, f64::MIN, f64::MAX, f64::MIN), |(a, b, c, d), &(x, y)| {
                (a.min(x), b.max(x), c.min(y), d.max(y))
            })
        };
        let (xa, xb) = decades(xlo, xhi);
        let (ya, yb) = decades(ylo, yhi);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x.log10() - xa as f64) / (xb - xa) as f64 * pw;
        let sy = |y: f64| TOP + ph - (y.log10() - ya as f64) / (yb - ya) as f64 * ph;

        let mut s = String::new();
        let w = &mut s;
        writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
        writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(w, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&self.title)).unwrap();
        for k in xa..=xb {
            let x = sx(10f64.powi(k));
            writeln!(w, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP + ph).unwrap();
            writeln!(w, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"#, TOP + ph + 16.0).unwrap();
        }
        for k in ya..=yb {
            let y = sy(10f64.powi(k));
            writeln!(w, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw).unwrap();
            writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#, LEFT - 6.0, y + 4.0).unwrap();
        }
        writeln!(w, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, TOP + ph + 36.0, escape(&self.x_label)).unwrap();
        writeln!(
            w,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        )
        .unwrap();
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = series
                .points
                .iter()
                .filter(|&&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if !coords.is_empty() {
                writeln!(w, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#, coords.join(" ")).unwrap();
            }
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            writeln!(w, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0).unwrap();
            writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&series.label)).unwrap();
        }
        writeln!(w, r##"<text x="{LEFT}" y="{:.2}" font-size="10" fill="#555">{}</text>"##, HEIGHT - 12.0, escape(&self.caption)).unwrap();
        writeln!(w, "</svg>").unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> LogLogChart {
        LogLogChart {
            title: "gap <mean>".into(),
            caption: "c".into(),
            x_label: "t".into(),
            y_label: "gap".into(),
            series: vec![
                Series { label: "iid".into(), points: vec![(10.0, 1.0), (100.0, 0.1), (1000.0, 0.0)] },
                Series { label: "slow".into(), points: vec![(10.0, 2.0), (100.0, 0.3)] },
            ],
        }
    }

    #[test]
    fn one_polyline_per_series_and_escaped_text() {
        let svg = chart().render();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("gap &lt;mean&gt;"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn zero_values_are_dropped() {
        let svg = chart().render();
        let first = svg.split("<polyline").nth(1).unwrap();
        let points = first.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 2);
    }

    #[test]
    fn deterministic() {
        assert_eq!(chart().render(), chart().render());
    }
}
