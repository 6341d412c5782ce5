//! Report emission: the aggregated summary as CSV, JSON, and plain text,
//! plus an SVG overlay of mean equity curves. All four files are pure
//! functions of their inputs, so identical runs emit identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use esgrl_core::Real;

use crate::aggregate::{self, MetricSamples, SummaryTable, SUMMARY_CSV_HEADER};
use crate::runner::Manifest;
use crate::{io_err, HarnessError};

/// One plotted equity curve (already averaged across seeds where relevant).
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub values: Vec<Real>,
}

fn opt(v: Option<Real>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(table: &SummaryTable) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.cell,
            r.metric,
            opt(r.mean),
            opt(r.std),
            opt(r.min),
            opt(r.max),
            r.n,
            r.excluded
        );
    }
    out
}

fn json_opt(v: Option<Real>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "null".into())
}

pub fn summary_json(table: &SummaryTable) -> String {
    let mut out = String::from("[\n");
    for (i, r) in table.rows.iter().enumerate() {
        let _ = write!(
            out,
            "  {{\"cell\": \"{}\", \"metric\": \"{}\", \"mean\": {}, \"std\": {}, \"min\": {}, \"max\": {}, \"n\": {}, \"excluded\": {}}}",
            r.cell,
            r.metric,
            json_opt(r.mean),
            json_opt(r.std),
            json_opt(r.min),
            json_opt(r.max),
            r.n,
            r.excluded
        );
        out.push_str(if i + 1 < table.rows.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out
}

pub fn summary_text(table: &SummaryTable) -> String {
    let mut out = String::new();
    for cell in table.cells() {
        let _ = writeln!(out, "{cell}");
        for r in table.rows.iter().filter(|r| r.cell == cell) {
            match (r.mean, r.std, r.min, r.max) {
                (Some(mean), Some(std), Some(min), Some(max)) => {
                    let _ = writeln!(
                        out,
                        "  {:<18} {:>12.6} ± {:<12.6} [{:.6}, {:.6}] n={} excluded={}",
                        r.metric.to_string(),
                        mean,
                        std,
                        min,
                        max,
                        r.n,
                        r.excluded
                    );
                }
                _ => {
                    let _ = writeln!(
                        out,
                        "  {:<18} degenerate for every seed (excluded={})",
                        r.metric.to_string(),
                        r.excluded
                    );
                }
            }
        }
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Hand-rolled SVG: one polyline per curve over a shared day axis, baseline
/// curves dashed, legend on the right. Labels are directory-safe slugs, so
/// no XML escaping is needed.
pub fn comparison_svg(curves: &[Curve]) -> Result<String, HarnessError> {
    if curves.is_empty() || curves.iter().all(|c| c.values.is_empty()) {
        return Err(HarnessError::Report("no equity curves to plot".into()));
    }
    let (width, height) = (900.0, 560.0);
    let (left, right, top, bottom) = (70.0, 240.0, 30.0, 50.0);
    let (pw, ph) = (width - left - right, height - top - bottom);

    let max_len = curves.iter().map(|c| c.values.len()).max().unwrap();
    let mut lo = Real::INFINITY;
    let mut hi = Real::NEG_INFINITY;
    for c in curves {
        for v in &c.values {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(HarnessError::Report("equity curves contain non-finite values".into()));
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);

    let x = |day: usize| left + pw * day as Real / (max_len.max(2) - 1) as Real;
    let y = |v: Real| top + ph * (1.0 - (v - lo) / (hi - lo));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");

    for i in 0..=4 {
        let v = lo + (hi - lo) * i as Real / 4.0;
        let yy = y(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{left}\" y1=\"{yy:.2}\" x2=\"{:.2}\" y2=\"{yy:.2}\" stroke=\"#dddddd\"/>",
            left + pw
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.4}</text>",
            left - 6.0,
            yy + 4.0
        );
    }
    for i in 0..=4 {
        let day = (max_len - 1) * i / 4;
        let xx = x(day);
        let _ = writeln!(
            svg,
            "<text x=\"{xx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{day}</text>",
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{:.2}\" stroke=\"black\"/>",
        top + ph
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{left}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">trading day</text>",
        left + pw / 2.0,
        height - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{:.2}\" transform=\"rotate(-90 18 {:.2})\" text-anchor=\"middle\">portfolio value</text>",
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if c.label.starts_with("baseline_") {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        let mut points = String::new();
        for (day, v) in c.values.iter().enumerate() {
            let _ = write!(points, "{:.2},{:.2} ", x(day), y(*v));
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
            points.trim_end()
        );
        let ly = top + 16.0 * i as Real;
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>",
            left + pw + 14.0,
            left + pw + 40.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            left + pw + 46.0,
            ly + 4.0,
            c.label
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes `summary.csv`, `summary.json`, `summary.txt`, and
/// `comparison.svg` into `dir`.
pub fn emit_report(dir: &Path, table: &SummaryTable, curves: &[Curve]) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let write = |name: &str, body: String| -> Result<(), HarnessError> {
        let path = dir.join(name);
        fs::write(&path, body.as_bytes()).map_err(|e| io_err(&path, e))
    };
    write("summary.csv", summary_csv(table))?;
    write("summary.json", summary_json(table))?;
    write("summary.txt", summary_text(table))?;
    write("comparison.svg", comparison_svg(curves)?)?;
    Ok(())
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_equity_csv(text: &str, path: &Path) -> Result<Vec<Real>, HarnessError> {
    let bad = |msg: String| HarnessError::Report(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    match lines.next() {
        Some("date,value") => {}
        other => return Err(bad(format!("bad equity header {other:?}"))),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v = l.split(',').nth(1).ok_or_else(|| bad(format!("short row {l:?}")))?;
            v.parse::<Real>().map_err(|e| bad(format!("bad value {v:?}: {e}")))
        })
        .collect()
}

/// Rebuilds the summary and plots for an existing run directory from its
/// manifest and per-run artifacts, without re-running anything.
pub fn report_from_dir(dir: &Path) -> Result<SummaryTable, HarnessError> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&read(&manifest_path)?)
        .map_err(|e| HarnessError::Report(format!("{}: {e}", manifest_path.display())))?;
    if manifest.version != crate::runner::MANIFEST_VERSION {
        return Err(HarnessError::Report(format!(
            "manifest version {:?}, this build reads {:?}",
            manifest.version,
            crate::runner::MANIFEST_VERSION
        )));
    }

    let mut groups: BTreeMap<String, Vec<MetricSamples>> = BTreeMap::new();
    let mut curve_values: BTreeMap<String, Vec<Vec<Real>>> = BTreeMap::new();
    for run in manifest.runs.iter().filter(|r| r.ok) {
        let run_dir = dir.join(&run.dir);
        let samples = aggregate::parse_metrics_json(&read(&run_dir.join("metrics.json"))?)?;
        groups.entry(run.cell.clone()).or_default().push(samples);
        let equity_path = run_dir.join("equity.csv");
        let values = parse_equity_csv(&read(&equity_path)?, &equity_path)?;
        curve_values.entry(run.cell.clone()).or_default().push(values);
    }
    for name in &manifest.baselines {
        let kind = name.strip_prefix("baseline_").unwrap_or(name);
        let bdir = dir.join("baselines").join(kind);
        let samples = aggregate::parse_metrics_json(&read(&bdir.join("metrics.json"))?)?;
        groups.entry(name.clone()).or_default().push(samples);
        let equity_path = bdir.join("equity.csv");
        let values = parse_equity_csv(&read(&equity_path)?, &equity_path)?;
        curve_values.entry(name.clone()).or_default().push(values);
    }
    if groups.is_empty() {
        return Err(HarnessError::Report("manifest lists no successful runs".into()));
    }

    let table = aggregate::aggregate(&groups);
    let curves: Vec<Curve> = curve_values
        .into_iter()
        .map(|(label, group)| {
            let days = group.iter().map(Vec::len).min().unwrap_or(0);
            let n = group.len() as Real;
            let values = (0..days)
                .map(|d| group.iter().map(|v| v[d]).sum::<Real>() / n)
                .collect();
            Curve { label, values }
        })
        .collect();
    emit_report(dir, &table, &curves)?;
    Ok(table)
}
