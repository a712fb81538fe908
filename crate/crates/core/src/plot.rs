//! Minimal deterministic SVG output: line plots and labelled heatmaps.
//!
//! Documents are self-contained (no external fonts, styles or scripts) and
//! byte-identical for identical input.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 120.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Every `k`-th point so that at most `MAX_POINTS` remain; the last point is kept.
fn decimate(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<_> = points.iter().step_by(stride).copied().collect();
    if let Some(last) = points.last() {
        if out.last() != Some(last) {
            out.push(*last);
        }
    }
    out
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LinePlot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn with_series(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            name: name.into(),
            points,
        });
        self
    }

    pub fn to_svg(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = finite_range(all().map(|p| p.0));
        let (y0, y1) = finite_range(all().map(|p| p.1));
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = header(&self.title);
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>"##
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(
                s,
                r##"<line x1="{px:.2}" y1="{b:.2}" x2="{px:.2}" y2="{b2:.2}" stroke="#000"/><text x="{px:.2}" y="{ty:.2}" text-anchor="middle">{}</text>"##,
                tick_label(xv),
                b = MARGIN_T + ph,
                b2 = MARGIN_T + ph + 5.0,
                ty = MARGIN_T + ph + 18.0,
            );
            let _ = writeln!(
                s,
                r##"<line x1="{l:.2}" y1="{py:.2}" x2="{MARGIN_L:.2}" y2="{py:.2}" stroke="#000"/><text x="{tx:.2}" y="{py2:.2}" text-anchor="end">{}</text>"##,
                tick_label(yv),
                l = MARGIN_L - 5.0,
                tx = MARGIN_L - 8.0,
                py2 = py + 4.0,
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<String> = decimate(&series.points)
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = MARGIN_T + 14.0 + 18.0 * k as f64;
            let lx = WIDTH - MARGIN_R + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 18.0,
                lx + 22.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

/// One heatmap cell: a value in `[0, 1]` mapped to color, and a label.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub value: f64,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_ticks: Vec<String>,
    pub y_ticks: Vec<String>,
    /// `cells[row][col]`, row index along y.
    pub cells: Vec<Vec<Option<Cell>>>,
}

/// White-to-blue ramp over `[0, 1]`.
fn ramp(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(247.0, 8.0),
        mix(251.0, 81.0),
        mix(255.0, 156.0)
    )
}

impl Heatmap {
    /// Heatmap of scalar field values on a 2D grid, normalized to its range.
    pub fn from_field(title: &str, nx: usize, ny: usize, values: &[f64]) -> Self {
        let (lo, hi) = finite_range(values.iter().copied());
        let cells = (0..ny)
            .rev()
            .map(|j| {
                (0..nx)
                    .map(|i| {
                        Some(Cell {
                            value: (values[j * nx + i] - lo) / (hi - lo),
                            label: String::new(),
                        })
                    })
                    .collect()
            })
            .collect();
        Heatmap {
            title: format!("{title} (range {} .. {})", tick_label(lo), tick_label(hi)),
            x_label: "x".into(),
            y_label: "y".into(),
            x_ticks: Vec::new(),
            y_ticks: Vec::new(),
            cells,
        }
    }

    pub fn to_svg(&self) -> String {
        let rows = self.cells.len().max(1);
        let cols = self.cells.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let (cw, ch) = (pw / cols as f64, ph / rows as f64);
        let mut s = header(&self.title);
        for (r, row) in self.cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                let (x, y) = (MARGIN_L + c as f64 * cw, MARGIN_T + r as f64 * ch);
                let fill = match cell {
                    Some(cell) => ramp(cell.value),
                    None => "#dddddd".into(),
                };
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{fill}"/>"#
                );
                if let Some(cell) = cell.as_ref().filter(|c| !c.label.is_empty()) {
                    let ink = if cell.value > 0.6 { "#fff" } else { "#000" };
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="{ink}">{}</text>"#,
                        x + cw / 2.0,
                        y + ch / 2.0 + 4.0,
                        escape(&cell.label)
                    );
                }
            }
        }
        for (c, t) in self.x_ticks.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                MARGIN_L + (c as f64 + 0.5) * cw,
                MARGIN_T + ph + 16.0,
                escape(t)
            );
        }
        for (r, t) in self.y_ticks.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_L - 6.0,
                MARGIN_T + (r as f64 + 0.5) * ch + 4.0,
                escape(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let y = MARGIN_T + ph - f * ph / 2.0;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="14" height="{:.2}" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                WIDTH - MARGIN_R + 14.0,
                y - ph / 8.0,
                ph / 8.0,
                ramp(f),
                WIDTH - MARGIN_R + 32.0,
                y - ph / 16.0 + 4.0,
                tick_label(f)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
