//! SVG line charts of a results CSV: median per (group, x) with an interquartile band.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use oraclepriv::stats::{median, quantile};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    pub group: Option<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub title: Option<String>,
}

/// One plotted point: median and quartiles of the y values sharing an x.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub x: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub count: usize,
}

pub type Series = BTreeMap<String, Vec<Summary>>;

fn column(headers: &csv::StringRecord, name: &str) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Plot(format!("column `{name}` not found; have {}", headers.iter().collect::<Vec<_>>().join(", "))))
}

fn number(s: &str, col: &str, line: usize) -> CliResult<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Plot(format!("row {line}: `{col}` value `{s}` is not a number")))
}

/// Groups rows and aggregates each (group, x) cell.
pub fn summarize(csv_text: &str, spec: &PlotSpec) -> CliResult<Series> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(csv_text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(CliError::Plot("empty CSV".into()));
    }
    let xi = column(&headers, &spec.x)?;
    let yi = column(&headers, &spec.y)?;
    let gi = spec.group.as_deref().map(|g| column(&headers, g)).transpose()?;
    let mut cells: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    let mut rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let x = number(&rec[xi], &spec.x, line)?;
        let y = number(&rec[yi], &spec.y, line)?;
        if (spec.log_x && !(x > 0.0)) || (spec.log_y && !(y > 0.0)) {
            continue;
        }
        let g = gi.map_or_else(String::new, |i| rec[i].to_string());
        // Key on the bit pattern so equal x values share a cell; order by value below.
        cells.entry(g).or_default().entry(x.to_bits()).or_insert((x, Vec::new())).1.push(y);
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Plot("no plottable data rows".into()));
    }
    Ok(cells
        .into_iter()
        .map(|(g, by_x)| {
            let mut pts: Vec<Summary> = by_x
                .into_values()
                .map(|(x, ys)| Summary {
                    x,
                    median: median(&ys),
                    q1: quantile(&ys, 0.25),
                    q3: quantile(&ys, 0.75),
                    count: ys.len(),
                })
                .collect();
            pts.sort_by(|a, b| a.x.total_cmp(&b.x));
            (g, pts)
        })
        .collect())
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            let v = if log { v.log10() } else { v };
            (a.min(v), b.max(v))
        });
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        } else {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b >= a {
                return (a..=b).map(|e| 10f64.powi(e)).collect();
            }
        }
        let span = self.hi - self.lo;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|s| s * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-12 {
            out.push(if self.log { 10f64.powf(t) } else { t });
            t += step;
        }
        out
    }
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render a chart with one median line and quartile band per group.
pub fn render_svg(series: &Series, spec: &PlotSpec) -> String {
    let all = || series.values().flatten();
    let ax = Axis::new(all().map(|s| s.x), spec.log_x);
    let ay = Axis::new(all().flat_map(|s| [s.q1, s.q3, s.median]), spec.log_y);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |x: f64| LEFT + ax.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - ay.frac(y)) * ph;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for t in ax.ticks() {
        let x = px(t);
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/>"##, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, label(t));
    }
    for t in ay.ticks() {
        let y = py(t);
        let _ = writeln!(svg, r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#444"/>"##, LEFT - 5.0);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, label(t));
    }
    let xl = if spec.log_x { format!("{} (log)", spec.x) } else { spec.x.clone() };
    let yl = if spec.log_y { format!("{} (log)", spec.y) } else { spec.y.clone() };
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(&xl));
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&yl)
    );
    if let Some(t) = &spec.title {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(t));
    }
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if pts.iter().any(|p| p.count > 1) {
            let upper = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.x), py(p.q3)));
            let lower = pts.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.x), py(p.q1)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(svg, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, poly.join(" "));
        }
        let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.x), py(p.median))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-group="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(name),
            line.join(" ")
        );
        for p in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(p.x), py(p.median));
        }
        let ly = TOP + 16.0 + 20.0 * k as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(svg, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 22.0);
        let shown = if name.is_empty() { spec.y.as_str() } else { name.as_str() };
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 28.0, ly + 4.0, escape(shown));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn plot(results: &Path, spec: &PlotSpec, out: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(results).map_err(CliError::io(results))?;
    if text.trim().is_empty() {
        return Err(CliError::Plot(format!("{} is empty", results.display())));
    }
    let series = summarize(&text, spec)?;
    std::fs::write(out, render_svg(&series, spec)).map_err(CliError::io(out))
}
