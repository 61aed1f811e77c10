//! Plot-ready series files and static polyline SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use crate::experiments::Row;
use crate::report::ExperimentReport;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Received-photon distributions and z-scores per PNS strategy.
    Fig3,
    /// Cumulative Trojan-horse gain per phase policy.
    Fig4,
    /// Mean surviving path count against compromised fraction.
    Fig6a,
    /// The same, split by endpoint distance.
    Fig6b,
}

impl Figure {
    pub fn experiment(&self) -> &'static str {
        match self {
            Figure::Fig3 => "pns",
            Figure::Fig4 => "trojan",
            Figure::Fig6a | Figure::Fig6b => "topology-decay",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig6a => "fig6a",
            Figure::Fig6b => "fig6b",
        }
    }
}

impl FromStr for Figure {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig6a" => Ok(Figure::Fig6a),
            "fig6b" => Ok(Figure::Fig6b),
            _ => Err(CliError::config(format!("unknown figure `{s}` (expected fig3, fig4, fig6a or fig6b)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub id: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn num(row: &Row, key: &str) -> Result<f64, CliError> {
    match row.get(key) {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| CliError::config(format!("column `{key}` is not numeric"))),
        Some(Value::String(s)) => s.parse().map_err(|_| CliError::config(format!("column `{key}` is not numeric"))),
        _ => Err(CliError::config(format!("report rows lack column `{key}`"))),
    }
}

fn text<'a>(row: &'a Row, key: &str) -> Result<&'a str, CliError> {
    row.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::config(format!("report rows lack column `{key}`")))
}

/// Groups `(x, y)` points by a name column, keeping first-seen order.
fn group(rows: &[&Row], name: impl Fn(&Row) -> Result<String, CliError>, x: &str, y: &str) -> Result<Vec<Series>, CliError> {
    let mut order: Vec<String> = Vec::new();
    let mut points: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        let n = name(row)?;
        if !points.contains_key(&n) {
            order.push(n.clone());
        }
        points.entry(n).or_default().push((num(row, x)?, num(row, y)?));
    }
    Ok(order
        .into_iter()
        .map(|n| Series {
            points: points.remove(&n).unwrap_or_default(),
            name: n,
        })
        .collect())
}

pub fn charts(report: &ExperimentReport, figure: Figure) -> Result<Vec<Chart>, CliError> {
    if report.config.experiment != figure.experiment() {
        return Err(CliError::config(format!(
            "{} needs a {} report, got {}",
            figure.name(),
            figure.experiment(),
            report.config.experiment
        )));
    }
    let all: Vec<&Row> = report.rows.iter().collect();
    let by = |key: &'static str| move |r: &Row| text(r, key).map(str::to_string);
    let chart = |id: String, x: &str, y: &str, series| Chart {
        id,
        x_label: x.to_string(),
        y_label: y.to_string(),
        series,
    };
    Ok(match figure {
        Figure::Fig3 => vec![
            chart("fig3".into(), "bin", "proportion", group(&all, by("strategy"), "bin", "proportion")?),
            chart("fig3_z".into(), "bin", "z", group(&all, by("strategy"), "bin", "z")?),
        ],
        Figure::Fig4 => vec![chart("fig4".into(), "photons", "cumulative_gain", group(&all, by("policy"), "photons", "cumulative_gain")?)],
        Figure::Fig6a => {
            let rows: Vec<&Row> = all.iter().copied().filter(|r| r.get("distance") == Some(&Value::from("all"))).collect();
            vec![chart("fig6a".into(), "fraction", "mean_paths", group(&rows, by("kind"), "fraction", "mean_paths")?)]
        }
        Figure::Fig6b => {
            let rows: Vec<&Row> = all.iter().copied().filter(|r| r.get("distance") != Some(&Value::from("all"))).collect();
            let mut kinds: Vec<String> = Vec::new();
            for r in &rows {
                let k = text(r, "kind")?.to_string();
                if !kinds.contains(&k) {
                    kinds.push(k);
                }
            }
            kinds
                .iter()
                .map(|k| {
                    let of_kind: Vec<&Row> = rows.iter().copied().filter(|r| text(r, "kind").ok() == Some(k)).collect();
                    let series = group(&of_kind, |r| Ok(format!("d{}", text(r, "distance")?)), "fraction", "mean_paths")?;
                    Ok(chart(format!("fig6b_{}", slug(k)), "fraction", "mean_paths", series))
                })
                .collect::<Result<_, CliError>>()?
        }
    })
}

pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn series_csv(chart: &Chart, series: &Series) -> String {
    let mut out = format!("{},{}\n", chart.x_label, chart.y_label);
    for (x, y) in &series.points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub fn svg(chart: &Chart) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 180.0, 20.0, 50.0);
    let pts = chart.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    y0 = y0.min(0.0);
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = left,
        t = top,
        b = top + ph,
        r = left + pw
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(fx), top + ph + 18.0, tick(fx));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 10.0, chart.x_label);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        chart.y_label
    );
    for (i, s) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<chart>_<series>.csv` per series, plus `<chart>.svg` on request.
pub fn emit_plotdata(report: &ExperimentReport, figure: Figure, out_dir: &Path, with_svg: bool) -> Result<Vec<PathBuf>, CliError> {
    let charts = charts(report, figure)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: String| -> Result<(), CliError> {
        std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    };
    for chart in &charts {
        for s in &chart.series {
            put(out_dir.join(format!("{}_{}.csv", chart.id, slug(&s.name))), series_csv(chart, s))?;
        }
        if with_svg {
            put(out_dir.join(format!("{}.svg", chart.id)), svg(chart))?;
        }
    }
    Ok(written)
}
