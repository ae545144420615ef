//! Deterministic SVG charts of two-column CSV files (template series or
//! line scores).

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChartData {
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

impl ChartData {
    /// Template series are drawn as steps, scores as a scatter.
    pub fn is_series(&self) -> bool {
        self.y_label == "template_id"
    }
}

/// Parses a two-column CSV with a header row.
pub fn parse_csv(text: &str) -> Result<ChartData> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() != 2 {
        return Err(Error::MalformedCsv(format!(
            "expected 2 columns, found {}",
            headers.len()
        )));
    }
    let mut points = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let num = |k: usize| -> Result<f64> {
            let cell = row.get(k).unwrap_or("").trim();
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedCsv(format!("row {}: bad number {cell:?}", i + 2)))
        };
        points.push((num(0)?, num(1)?));
    }
    if points.is_empty() {
        return Err(Error::MalformedCsv("no data rows".into()));
    }
    Ok(ChartData {
        x_label: headers[0].to_string(),
        y_label: headers[1].to_string(),
        points,
    })
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn range(values: impl Iterator<Item = f64>, from_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if from_zero {
        lo = lo.min(0.0);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    (lo, hi)
}

fn label(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

/// Renders the chart; identical input gives identical bytes.
pub fn render_svg(data: &ChartData) -> String {
    let (x0, x1) = range(data.points.iter().map(|p| p.0), false);
    let (y0, y1) = range(data.points.iter().map(|p| p.1), true);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    s.push_str("<g class=\"ticks\">\n");
    for k in 0..=5 {
        let f = f64::from(k) / 5.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + plot_h + 16.0,
            label(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            label(yv)
        );
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(&data.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&data.y_label)
    );
    if data.is_series() && data.points.len() > 1 {
        let mut path = String::new();
        for (i, &(x, y)) in data.points.iter().enumerate() {
            if i == 0 {
                let _ = write!(path, "M{:.2},{:.2}", sx(x), sy(y));
            } else {
                let _ = write!(path, " H{:.2} V{:.2}", sx(x), sy(y));
            }
        }
        let _ = writeln!(
            s,
            r##"<path class="steps" d="{path}" fill="none" stroke="#8aa" stroke-width="1"/>"##
        );
    }
    s.push_str("<g class=\"markers\" fill=\"#246\">\n");
    for &(x, y) in &data.points {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, sx(x), sy(y));
    }
    s.push_str("</g>\n</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
