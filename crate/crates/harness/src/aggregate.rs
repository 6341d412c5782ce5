//! Cross-seed aggregation: per (cell, metric) mean, sample std, min, max,
//! and sample count, with degenerate metric values excluded and counted.

use std::collections::BTreeMap;

use esgrl_core::analytics::{MetricName, MetricOutcome, MetricsReport};
use esgrl_core::Real;

use crate::runner::{BaselineRecord, RunRecord};
use crate::HarnessError;

/// One aggregated statistic row. `n` counts the values that entered the
/// statistics; `excluded` counts seeds whose metric was degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMetric {
    pub cell: String,
    pub metric: MetricName,
    pub mean: Option<Real>,
    pub std: Option<Real>,
    pub min: Option<Real>,
    pub max: Option<Real>,
    pub n: usize,
    pub excluded: usize,
}

/// Rows ordered by cell label, then by the fixed metric order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub rows: Vec<CellMetric>,
}

impl SummaryTable {
    pub fn get(&self, cell: &str, metric: MetricName) -> Option<&CellMetric> {
        self.rows.iter().find(|r| r.cell == cell && r.metric == metric)
    }

    pub fn cells(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.cell.as_str()) {
                out.push(&r.cell);
            }
        }
        out
    }
}

/// Per-seed metric values for one cell: `None` marks a degenerate value.
pub type MetricSamples = BTreeMap<MetricName, Option<Real>>;

fn report_samples(report: &MetricsReport<Real>) -> MetricSamples {
    MetricName::ALL
        .iter()
        .map(|name| {
            let v = match report.get(*name) {
                MetricOutcome::Value(v) => Some(v),
                MetricOutcome::Degenerate(_) => None,
            };
            (*name, v)
        })
        .collect()
}

/// Aggregates grouped per-seed samples. With one included sample the std is
/// 0 by convention; with none, every statistic is absent.
pub fn aggregate(groups: &BTreeMap<String, Vec<MetricSamples>>) -> SummaryTable {
    let mut rows = Vec::new();
    for (cell, samples) in groups {
        for metric in MetricName::ALL {
            let values: Vec<Real> =
                samples.iter().filter_map(|s| s.get(&metric).copied().flatten()).collect();
            let excluded = samples.len() - values.len();
            let n = values.len();
            if n == 0 {
                rows.push(CellMetric {
                    cell: cell.clone(),
                    metric,
                    mean: None,
                    std: None,
                    min: None,
                    max: None,
                    n,
                    excluded,
                });
                continue;
            }
            let mean = values.iter().sum::<Real>() / n as Real;
            let std = if n == 1 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / (n as Real - 1.0))
                    .sqrt()
            };
            let min = values.iter().copied().fold(Real::INFINITY, Real::min);
            let max = values.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            rows.push(CellMetric {
                cell: cell.clone(),
                metric,
                mean: Some(mean),
                std: Some(std),
                min: Some(min),
                max: Some(max),
                n,
                excluded,
            });
        }
    }
    SummaryTable { rows }
}

/// Builds the summary straight from in-memory run records. Baselines enter
/// as single-sample rows under their `baseline_*` labels.
pub fn from_runs(runs: &[RunRecord], baselines: &[BaselineRecord]) -> SummaryTable {
    let mut groups: BTreeMap<String, Vec<MetricSamples>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.cell.clone()).or_default().push(report_samples(&r.metrics));
    }
    for b in baselines {
        groups.entry(b.name.clone()).or_default().push(report_samples(&b.metrics));
    }
    aggregate(&groups)
}

/// Reads one `metrics.json` back into per-metric samples; `null` means the
/// metric was degenerate for that run.
pub fn parse_metrics_json(text: &str) -> Result<MetricSamples, HarnessError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| HarnessError::Report(format!("metrics.json: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| HarnessError::Report("metrics.json: not a JSON object".into()))?;
    let mut out = MetricSamples::new();
    for name in MetricName::ALL {
        let v = obj
            .get(name.as_str())
            .ok_or_else(|| HarnessError::Report(format!("metrics.json: missing {name}")))?;
        let sample = match v {
            serde_json::Value::Null => None,
            serde_json::Value::Number(x) => Some(
                x.as_f64()
                    .ok_or_else(|| HarnessError::Report(format!("metrics.json: bad {name}")))?,
            ),
            other => {
                return Err(HarnessError::Report(format!("metrics.json: {name} is {other}")))
            }
        };
        out.insert(name, sample);
    }
    Ok(out)
}

pub const SUMMARY_CSV_HEADER: &str = "cell,metric,mean,std,min,max,n,excluded";

/// Parses a `summary.csv` produced by [`crate::report::emit_report`] back
/// into the table it came from. Float cells survive the trip exactly because
/// both sides use the shortest round-trip decimal form.
pub fn parse_summary_csv(text: &str) -> Result<SummaryTable, HarnessError> {
    let bad = |line: usize, msg: String| HarnessError::Report(format!("summary.csv:{line}: {msg}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SUMMARY_CSV_HEADER => {}
        Some((_, h)) => return Err(bad(1, format!("header {h:?}, expected {SUMMARY_CSV_HEADER:?}"))),
        None => return Err(bad(1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let n = i + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(bad(n, format!("expected 8 columns, got {}", cols.len())));
        }
        let float = |s: &str, what: &str| -> Result<Option<Real>, HarnessError> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<Real>().map(Some).map_err(|e| bad(n, format!("{what}: {e}")))
        };
        rows.push(CellMetric {
            cell: cols[0].to_string(),
            metric: cols[1].parse().map_err(|e| bad(n, e))?,
            mean: float(cols[2], "mean")?,
            std: float(cols[3], "std")?,
            min: float(cols[4], "min")?,
            max: float(cols[5], "max")?,
            n: cols[6].parse().map_err(|e| bad(n, format!("n: {e}")))?,
            excluded: cols[7].parse().map_err(|e| bad(n, format!("excluded: {e}")))?,
        });
    }
    Ok(SummaryTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(pairs: &[(MetricName, Option<Real>)]) -> MetricSamples {
        let mut m: MetricSamples = MetricName::ALL.iter().map(|n| (*n, Some(0.0))).collect();
        for (k, v) in pairs {
            m.insert(*k, *v);
        }
        m
    }

    #[test]
    fn three_seed_example_matches_hand_statistics() {
        let mut groups = BTreeMap::new();
        groups.insert(
            "cell".to_string(),
            vec![
                samples(&[(MetricName::Sharpe, Some(0.1))]),
                samples(&[(MetricName::Sharpe, Some(0.2))]),
                samples(&[(MetricName::Sharpe, Some(0.3))]),
            ],
        );
        let table = aggregate(&groups);
        let row = table.get("cell", MetricName::Sharpe).unwrap();
        assert!((row.mean.unwrap() - 0.2).abs() < 1e-15);
        assert!((row.std.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(row.min, Some(0.1));
        assert_eq!(row.max, Some(0.3));
        assert_eq!((row.n, row.excluded), (3, 0));
    }

    #[test]
    fn degenerate_samples_are_excluded_and_counted() {
        let mut groups = BTreeMap::new();
        groups.insert(
            "cell".to_string(),
            vec![
                samples(&[(MetricName::Omega, Some(2.0))]),
                samples(&[(MetricName::Omega, None)]),
                samples(&[(MetricName::Omega, None)]),
            ],
        );
        let table = aggregate(&groups);
        let row = table.get("cell", MetricName::Omega).unwrap();
        assert_eq!((row.n, row.excluded), (1, 2));
        assert_eq!(row.mean, Some(2.0));
        assert_eq!(row.std, Some(0.0));

        let mut groups = BTreeMap::new();
        groups.insert("cell".to_string(), vec![samples(&[(MetricName::Calmar, None)])]);
        let row_all = aggregate(&groups);
        let row = row_all.get("cell", MetricName::Calmar).unwrap();
        assert_eq!((row.n, row.excluded), (0, 1));
        assert_eq!(row.mean, None);
        assert_eq!(row.std, None);
    }

    #[test]
    fn rows_follow_cell_then_metric_order() {
        let mut groups = BTreeMap::new();
        groups.insert("b_cell".to_string(), vec![samples(&[])]);
        groups.insert("a_cell".to_string(), vec![samples(&[])]);
        let table = aggregate(&groups);
        assert_eq!(table.rows.len(), 20);
        assert_eq!(table.cells(), vec!["a_cell", "b_cell"]);
        let metrics: Vec<MetricName> = table.rows[..10].iter().map(|r| r.metric).collect();
        assert_eq!(metrics, MetricName::ALL.to_vec());
    }

    #[test]
    fn metrics_json_parses_values_and_nulls() {
        let text = r#"{
  "annual_return": 0.5,
  "cumulative_return": 0.1,
  "annual_volatility": 0.2,
  "sharpe": 1.5,
  "calmar": null,
  "omega": 2.0,
  "sortino": null,
  "stability": 0.9,
  "max_drawdown": -0.05,
  "daily_var": -0.01,
  "degenerate": ["calmar", "sortino"]
}"#;
        let m = parse_metrics_json(text).unwrap();
        assert_eq!(m[&MetricName::Sharpe], Some(1.5));
        assert_eq!(m[&MetricName::Calmar], None);
        assert_eq!(m[&MetricName::Sortino], None);
        assert!(parse_metrics_json("{}").is_err());
    }
}
