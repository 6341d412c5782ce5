//! Executes a validated experiment: one trained policy per (grid cell, seed),
//! evaluated out-of-sample on the trade split, plus classical baselines, with
//! every artifact written under a predictable directory layout.
//!
//! ```text
//! out/
//!   manifest.json
//!   summary.{csv,json,txt}   comparison.svg
//!   runs/<cell>/seed_<n>/    trace.csv weights.csv equity.csv metrics.json
//!                            train_log.csv actor.ckpt critic.ckpt policy.meta
//!   baselines/<kind>/        trace.csv weights.csv equity.csv metrics.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use esgrl_core::agents::{evaluate, train, write_training_log};
use esgrl_core::analytics::{
    compute_metrics, run_baseline, write_metrics_json, MetricsReport, TRADING_DAYS_PER_YEAR,
};
use esgrl_core::env::{EnvConfig, EpisodeResult, NormStats, PortfolioEnv};
use esgrl_core::indicators::compute_features;
use esgrl_core::marketdata::{align_and_fill, load_dataset, load_esg, load_ohlcv, save_dataset, synth_market};
use esgrl_core::{Dataset, Features, Real};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, DataSource, ExperimentConfig};
use crate::report::{emit_report, Curve};
use crate::{aggregate, io_err, HarnessError};

pub const MANIFEST_VERSION: &str = "esgrl-manifest v1";

/// One completed (cell, seed) run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// Cell id, e.g. `a2c_regulated_esg`.
    pub cell: String,
    pub seed: u64,
    /// Trade-split episode driven by the trained policy's mean action.
    pub result: EpisodeResult<Real>,
    /// Metrics over the episode's net returns.
    pub metrics: MetricsReport<Real>,
    pub train_log: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub wall_secs: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineRecord {
    pub name: String,
    pub result: EpisodeResult<Real>,
    pub metrics: MetricsReport<Real>,
}

/// Everything `esgrl run` produced, for callers that keep going in-process.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub runs: Vec<RunRecord>,
    pub baselines: Vec<BaselineRecord>,
}

/// `manifest.json`: enough to audit provenance and re-aggregate without
/// re-running anything.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    /// SHA-256 of the aligned dataset in its cache encoding.
    pub dataset_fingerprint: String,
    pub algorithm: String,
    pub tickers: Vec<String>,
    pub seeds: Vec<u64>,
    pub cells: Vec<String>,
    pub train_days: usize,
    pub trade_days: usize,
    pub runs: Vec<ManifestRun>,
    pub baselines: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRun {
    pub cell: String,
    pub seed: u64,
    pub ok: bool,
    /// Run directory relative to the manifest.
    pub dir: String,
    pub wall_secs: f64,
    pub mean_phi: Option<f64>,
    pub final_value: Option<f64>,
    pub error: Option<String>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    let ds = match &cfg.data {
        DataSource::Csv { ohlcv, esg, tickers } => {
            let filter: Option<Vec<&str>> =
                tickers.as_ref().map(|ts| ts.iter().map(String::as_str).collect());
            let market = load_ohlcv::<Real>(ohlcv, filter.as_deref())?;
            let scores = load_esg::<Real>(esg)?;
            align_and_fill(&market, &scores)?
        }
        DataSource::Cache { path } => load_dataset::<Real>(path)?,
        DataSource::Synth { spec, days, seed } => synth_market::<Real>(spec, *days, *seed)?,
    };
    Ok(ds)
}

/// The dataset's identity for the manifest: hash of its canonical cache
/// encoding, so every source kind fingerprints the same way.
pub fn dataset_fingerprint(ds: &Dataset) -> String {
    let mut buf = Vec::new();
    save_dataset(ds, &mut buf).expect("in-memory write");
    sha256_hex(&buf)
}

struct Prepared {
    train_ds: Dataset,
    trade_ds: Dataset,
    train_panel: Features,
    trade_panel: Features,
    /// Train-split normalization stats keyed by `esg_in_state`, which widens
    /// the normalized feature section.
    norms: BTreeMap<bool, NormStats<Real>>,
}

fn prepare(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Prepared, HarnessError> {
    let (train_ds, trade_ds) = ds.split(cfg.train_end, cfg.trade_end)?;
    let train_panel = compute_features(&train_ds, &cfg.indicators)?;
    let trade_panel = compute_features(&trade_ds, &cfg.indicators)?;

    let mut norms = BTreeMap::new();
    if cfg.env.normalize_obs {
        for esg_flag in cfg.grid.iter().map(|c| c.esg_in_state) {
            if norms.contains_key(&esg_flag) {
                continue;
            }
            let mut env_cfg = cfg.env.clone();
            env_cfg.esg_in_state = esg_flag;
            norms.insert(esg_flag, NormStats::fit(&train_ds, &train_panel, &env_cfg)?);
        }
    }
    Ok(Prepared { train_ds, trade_ds, train_panel, trade_panel, norms })
}

fn cell_env_config(cfg: &ExperimentConfig, cell: crate::GridCell) -> EnvConfig<Real> {
    let mut env_cfg = cfg.env.clone();
    env_cfg.regulate = cell.regulate;
    env_cfg.esg_in_state = cell.esg_in_state;
    env_cfg
}

fn write_file(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    body(&mut buf).map_err(|e| io_err(path, e))?;
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Trains and evaluates one (cell, seed) run and writes its artifacts.
fn execute_run(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    cell: crate::GridCell,
    seed: u64,
    run_dir: &Path,
) -> Result<RunRecord, HarnessError> {
    let started = Instant::now();
    let env_cfg = cell_env_config(cfg, cell);
    let norm = prep.norms.get(&cell.esg_in_state).cloned();

    let mut hyper = cfg.agent.clone();
    hyper.seed = seed;

    let make_env = || PortfolioEnv::new(&prep.train_ds, &prep.train_panel, env_cfg.clone(), norm.clone());
    let (policy, log_rows) = train(make_env, &hyper)?;

    fs::create_dir_all(run_dir).map_err(|e| io_err(run_dir, e))?;
    policy.save(run_dir)?;
    let train_log = run_dir.join("train_log.csv");
    write_file(&train_log, |buf| write_training_log(&log_rows, buf))?;

    let mut trade_env = PortfolioEnv::new(&prep.trade_ds, &prep.trade_panel, env_cfg, norm)?;
    let result = evaluate(&policy, &mut trade_env)?;
    let metrics = compute_metrics(&result.net_returns(), TRADING_DAYS_PER_YEAR)?;

    write_run_artifacts(run_dir, &result, &metrics, prep.trade_ds.tickers())?;

    Ok(RunRecord {
        cell: cell.id(cfg.agent.algorithm),
        seed,
        result,
        metrics,
        train_log,
        checkpoint_dir: run_dir.to_path_buf(),
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

fn write_run_artifacts(
    dir: &Path,
    result: &EpisodeResult<Real>,
    metrics: &MetricsReport<Real>,
    tickers: &[String],
) -> Result<(), HarnessError> {
    write_file(&dir.join("trace.csv"), |buf| result.write_trace_csv(buf))?;
    write_file(&dir.join("weights.csv"), |buf| result.write_weights_csv(tickers, buf))?;
    write_file(&dir.join("equity.csv"), |buf| result.write_equity_csv(buf))?;
    write_file(&dir.join("metrics.json"), |buf| write_metrics_json(metrics, buf))?;
    Ok(())
}

/// Runs the full grid × seed matrix. Individual run failures (including
/// panics) are isolated: they land in the manifest with `ok = false` and do
/// not abort the remaining runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let ds = load_data(cfg)?;
    let fingerprint = dataset_fingerprint(&ds);
    let prep = prepare(cfg, &ds)?;
    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    log::info!(
        "dataset: {} tickers × {} days ({} train / {} trade), fingerprint {}",
        ds.n_assets(),
        ds.n_days(),
        prep.train_ds.n_days(),
        prep.trade_ds.n_days(),
        &fingerprint[..12],
    );

    let jobs: Vec<(crate::GridCell, u64)> = cfg
        .grid
        .iter()
        .flat_map(|cell| cfg.seeds.iter().map(|seed| (*cell, *seed)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel)
        .build()
        .map_err(|e| HarnessError::Report(format!("thread pool: {e}")))?;

    let results: Vec<(String, u64, String, Result<RunRecord, String>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(cell, seed)| {
                let cell_id = cell.id(cfg.agent.algorithm);
                let rel_dir = format!("runs/{cell_id}/seed_{seed}");
                let run_dir = out_dir.join(&rel_dir);
                let outcome = catch_unwind(AssertUnwindSafe(|| {
                    execute_run(cfg, &prep, *cell, *seed, &run_dir)
                }));
                let flat = match outcome {
                    Ok(Ok(rec)) => {
                        log::info!("{cell_id} seed {seed}: done in {:.1}s", rec.wall_secs);
                        Ok(rec)
                    }
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(panic) => Err(panic_message(panic)),
                };
                if let Err(msg) = &flat {
                    log::error!("{cell_id} seed {seed}: {msg}");
                }
                (cell_id, *seed, rel_dir, flat)
            })
            .collect()
    });

    let mut runs = Vec::new();
    let mut manifest_runs = Vec::new();
    for (cell_id, seed, rel_dir, outcome) in results {
        match outcome {
            Ok(rec) => {
                manifest_runs.push(ManifestRun {
                    cell: cell_id,
                    seed,
                    ok: true,
                    dir: rel_dir,
                    wall_secs: rec.wall_secs,
                    mean_phi: Some(rec.result.mean_phi()),
                    final_value: Some(rec.result.final_value),
                    error: None,
                });
                runs.push(rec);
            }
            Err(msg) => manifest_runs.push(ManifestRun {
                cell: cell_id,
                seed,
                ok: false,
                dir: rel_dir,
                wall_secs: 0.0,
                mean_phi: None,
                final_value: None,
                error: Some(msg),
            }),
        }
    }

    let baselines = run_baselines(cfg, &prep, out_dir)?;

    let manifest = Manifest {
        version: MANIFEST_VERSION.to_string(),
        config_sha256: cfg.config_sha256.clone(),
        dataset_fingerprint: fingerprint,
        algorithm: cfg.agent.algorithm.as_str().to_string(),
        tickers: ds.tickers().to_vec(),
        seeds: cfg.seeds.clone(),
        cells: cfg.grid.iter().map(|c| c.id(cfg.agent.algorithm)).collect(),
        train_days: prep.train_ds.n_days(),
        trade_days: prep.trade_ds.n_days(),
        runs: manifest_runs,
        baselines: baselines.iter().map(|b| b.name.clone()).collect(),
    };
    let manifest_path = out_dir.join("manifest.json");
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| HarnessError::Report(format!("manifest encode: {e}")))?;
    fs::write(&manifest_path, manifest_json.as_bytes()).map_err(|e| io_err(&manifest_path, e))?;

    let summary = aggregate::from_runs(&runs, &baselines);
    let curves = equity_curves(&runs, &baselines);
    emit_report(out_dir, &summary, &curves)?;

    Ok(ExperimentOutcome { out_dir: out_dir.clone(), manifest, runs, baselines })
}

fn run_baselines(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    out_dir: &Path,
) -> Result<Vec<BaselineRecord>, HarnessError> {
    let mut out = Vec::new();
    for spec in &cfg.baselines {
        let name = format!("baseline_{}", spec.kind.as_str());
        let result = run_baseline(
            &prep.trade_ds,
            &prep.trade_panel,
            spec,
            cfg.env.transaction_cost,
            cfg.env.esg_source,
        )?;
        let metrics = compute_metrics(&result.net_returns(), TRADING_DAYS_PER_YEAR)?;
        let dir = out_dir.join("baselines").join(spec.kind.as_str());
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        write_run_artifacts(&dir, &result, &metrics, prep.trade_ds.tickers())?;
        out.push(BaselineRecord { name, result, metrics });
    }
    Ok(out)
}

/// Per-cell mean equity across seeds, plus one curve per baseline. All runs
/// in a cell share the trade calendar, so pointwise averaging is well posed.
pub fn equity_curves(runs: &[RunRecord], baselines: &[BaselineRecord]) -> Vec<Curve> {
    let mut by_cell: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        by_cell.entry(&r.cell).or_default().push(r);
    }
    let mut curves = Vec::new();
    for (cell, group) in by_cell {
        let days = group[0].result.values.len();
        let mut mean = vec![0.0; days];
        for r in &group {
            for (m, v) in mean.iter_mut().zip(&r.result.values) {
                *m += *v;
            }
        }
        let n = group.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        curves.push(Curve { label: cell.to_string(), values: mean });
    }
    for b in baselines {
        curves.push(Curve { label: b.name.clone(), values: b.result.values.clone() });
    }
    curves
}

fn panic_message(panic: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = panic.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic: <non-string payload>".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn tiny_config(out: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
[data.synth]
days = 200
seed = 11
[[data.synth.assets]]
ticker = "UP"
start_price = 100.0
drift = 0.002
volatility = 0.01
esg = [9.0, 8.0, 7.0]
[[data.synth.assets]]
ticker = "DN"
start_price = 80.0
drift = -0.002
volatility = 0.01
esg = [2.0, 2.0, 2.0]

[split]
train_end = "2018-06-01"
trade_end = "2018-10-05"

[agent]
total_timesteps = 512
rollout_length = 8
hidden = [16]

[experiment]
seeds = [1, 2]
out_dir = "{}"

[[grid]]
regulate = false
esg_in_state = false
[[grid]]
regulate = true
esg_in_state = true
"#,
            out.display()
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn experiment_produces_full_artifact_tree() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(tmp.path());
        let outcome = run_experiment(&cfg).unwrap();

        assert_eq!(outcome.runs.len(), 4);
        assert!(outcome.manifest.runs.iter().all(|r| r.ok));
        assert_eq!(outcome.baselines.len(), 1);
        assert_eq!(outcome.manifest.baselines, vec!["baseline_stratified"]);

        for file in ["manifest.json", "summary.csv", "summary.json", "summary.txt", "comparison.svg"] {
            assert!(tmp.path().join(file).exists(), "missing {file}");
        }
        for cell in ["a2c_free_noesg", "a2c_regulated_esg"] {
            for seed in [1u64, 2] {
                let dir = tmp.path().join(format!("runs/{cell}/seed_{seed}"));
                for file in [
                    "trace.csv",
                    "weights.csv",
                    "equity.csv",
                    "metrics.json",
                    "train_log.csv",
                    "actor.ckpt",
                    "critic.ckpt",
                    "policy.meta",
                ] {
                    assert!(dir.join(file).exists(), "missing {cell}/seed_{seed}/{file}");
                }
            }
        }
        assert!(tmp.path().join("baselines/stratified/metrics.json").exists());
    }

    #[test]
    fn rerunning_the_same_config_is_byte_identical() {
        let tmp1 = tempfile::tempdir().unwrap();
        let tmp2 = tempfile::tempdir().unwrap();
        let mut cfg1 = tiny_config(tmp1.path());
        cfg1.agent.total_timesteps = 256;
        let mut cfg2 = cfg1.clone();
        cfg2.out_dir = tmp2.path().to_path_buf();

        run_experiment(&cfg1).unwrap();
        run_experiment(&cfg2).unwrap();

        for file in ["summary.csv", "summary.json", "summary.txt", "comparison.svg"] {
            let a = fs::read(tmp1.path().join(file)).unwrap();
            let b = fs::read(tmp2.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs");
        }
        let a = fs::read(tmp1.path().join("runs/a2c_free_noesg/seed_1/equity.csv")).unwrap();
        let b = fs::read(tmp2.path().join("runs/a2c_free_noesg/seed_1/equity.csv")).unwrap();
        assert_eq!(a, b, "equity curves differ between identical runs");
    }
}
