//! Experiment configuration: a TOML file mirroring [`ExperimentConfig`],
//! parsed strictly (unknown keys are errors) and validated exhaustively so
//! a bad config reports every problem in one pass.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use esgrl_core::agents::{AgentHyper, Algorithm};
use esgrl_core::analytics::{BaselineKind, BaselineSpec};
use esgrl_core::env::EnvConfig;
use esgrl_core::indicators::IndicatorConfig;
use esgrl_core::marketdata::{EsgSource, SynthAsset, SynthSpec, MIN_SYNTH_DAYS};
use esgrl_core::Real;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::HarnessError;

/// One point of the regulated/free × ESG-in-state/no-ESG grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub regulate: bool,
    pub esg_in_state: bool,
}

impl GridCell {
    pub const ALL: [GridCell; 4] = [
        GridCell { regulate: false, esg_in_state: false },
        GridCell { regulate: false, esg_in_state: true },
        GridCell { regulate: true, esg_in_state: false },
        GridCell { regulate: true, esg_in_state: true },
    ];

    /// Directory-safe cell label, e.g. `a2c_regulated_esg`.
    pub fn id(&self, algorithm: Algorithm) -> String {
        format!(
            "{}_{}_{}",
            algorithm.as_str(),
            if self.regulate { "regulated" } else { "free" },
            if self.esg_in_state { "esg" } else { "noesg" },
        )
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}",
            if self.regulate { "regulated" } else { "free" },
            if self.esg_in_state { "esg" } else { "noesg" },
        )
    }
}

/// Where the aligned dataset comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Long-format OHLCV CSV plus ESG CSV, aligned at load time.
    Csv { ohlcv: PathBuf, esg: PathBuf, tickers: Option<Vec<String>> },
    /// Previously saved `esgrl-dataset v1` cache file.
    Cache { path: PathBuf },
    /// Deterministic synthetic market.
    Synth { spec: SynthSpec, days: usize, seed: u64 },
}

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub train_end: NaiveDate,
    pub trade_end: NaiveDate,
    pub env: EnvConfig<Real>,
    pub indicators: IndicatorConfig,
    pub agent: AgentHyper<Real>,
    pub seeds: Vec<u64>,
    pub grid: Vec<GridCell>,
    pub baselines: Vec<BaselineSpec>,
    pub out_dir: PathBuf,
    pub parallel: usize,
    /// SHA-256 of the raw config text, recorded in the manifest.
    pub config_sha256: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data: RawData,
    split: RawSplit,
    #[serde(default)]
    env: RawEnv,
    #[serde(default)]
    indicators: RawIndicators,
    #[serde(default)]
    agent: RawAgent,
    experiment: RawExperiment,
    #[serde(default)]
    grid: Vec<GridCell>,
    #[serde(default)]
    baselines: Vec<RawBaseline>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    ohlcv: Option<PathBuf>,
    esg: Option<PathBuf>,
    cache: Option<PathBuf>,
    tickers: Option<Vec<String>>,
    synth: Option<RawSynth>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynth {
    days: usize,
    seed: u64,
    common_volatility: Option<f64>,
    start_date: Option<String>,
    base_volume: Option<f64>,
    assets: Vec<RawSynthAsset>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthAsset {
    ticker: String,
    start_price: f64,
    drift: f64,
    volatility: f64,
    esg: [f64; 3],
    #[serde(default)]
    esg_changes: Vec<RawEsgChange>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEsgChange {
    day: usize,
    esg: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    train_end: String,
    trade_end: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    lambda: Option<f64>,
    transaction_cost: Option<f64>,
    esg_source: Option<String>,
    include_weights_in_obs: Option<bool>,
    normalize_obs: Option<bool>,
    regulation_affects_value: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIndicators {
    macd_fast: Option<usize>,
    macd_slow: Option<usize>,
    macd_signal: Option<usize>,
    boll_window: Option<usize>,
    boll_k: Option<f64>,
    rsi_window: Option<usize>,
    cci_window: Option<usize>,
    dx_window: Option<usize>,
    sma_windows: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    algorithm: Option<String>,
    gamma: Option<f64>,
    gae_lambda: Option<f64>,
    learning_rate: Option<f64>,
    entropy_coef: Option<f64>,
    clip_epsilon: Option<f64>,
    batch_size: Option<usize>,
    rollout_length: Option<usize>,
    n_epochs: Option<usize>,
    total_timesteps: Option<usize>,
    value_coef: Option<f64>,
    max_grad_norm: Option<f64>,
    standardize_advantages: Option<bool>,
    hidden: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    seeds: Vec<u64>,
    out_dir: Option<PathBuf>,
    parallel: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBaseline {
    kind: String,
    lookback: Option<usize>,
    rebalance: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    parse_config(&text)
}

/// Parses and validates config text. Semantic problems are collected and
/// reported together rather than one at a time.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| HarnessError::Validation(vec![e.to_string()]))?;
    let mut errors = Vec::new();

    let data = resolve_data(&raw.data, &mut errors);

    let train_end = parse_date("split.train_end", &raw.split.train_end, &mut errors);
    let trade_end = parse_date("split.trade_end", &raw.split.trade_end, &mut errors);
    if let (Some(a), Some(b)) = (train_end, trade_end) {
        if a >= b {
            errors.push(format!("split: train_end {a} must precede trade_end {b}"));
        }
    }

    let mut env = EnvConfig::<Real>::default();
    if let Some(v) = raw.env.lambda {
        env.lambda = v;
    }
    if let Some(v) = raw.env.transaction_cost {
        env.transaction_cost = v;
    }
    if let Some(v) = raw.env.include_weights_in_obs {
        env.include_weights_in_obs = v;
    }
    if let Some(v) = raw.env.normalize_obs {
        env.normalize_obs = v;
    }
    if let Some(v) = raw.env.regulation_affects_value {
        env.regulation_affects_value = v;
    }
    if let Some(s) = &raw.env.esg_source {
        match s.parse::<EsgSource>() {
            Ok(src) => env.esg_source = src,
            Err(e) => errors.push(format!("env.esg_source: {e}")),
        }
    }
    if let Err(e) = env.validate() {
        errors.push(format!("env: {e}"));
    }

    let mut indicators = IndicatorConfig::default();
    let ri = &raw.indicators;
    if let Some(v) = ri.macd_fast {
        indicators.macd_fast = v;
    }
    if let Some(v) = ri.macd_slow {
        indicators.macd_slow = v;
    }
    if let Some(v) = ri.macd_signal {
        indicators.macd_signal = v;
    }
    if let Some(v) = ri.boll_window {
        indicators.boll_window = v;
    }
    if let Some(v) = ri.boll_k {
        indicators.boll_k = v;
    }
    if let Some(v) = ri.rsi_window {
        indicators.rsi_window = v;
    }
    if let Some(v) = ri.cci_window {
        indicators.cci_window = v;
    }
    if let Some(v) = ri.dx_window {
        indicators.dx_window = v;
    }
    if let Some(v) = &ri.sma_windows {
        indicators.sma_windows = v.clone();
    }
    if let Err(e) = indicators.validate() {
        errors.push(format!("indicators: {e}"));
    }

    let algorithm = match raw.agent.algorithm.as_deref() {
        None => Algorithm::A2c,
        Some(s) => match s.parse::<Algorithm>() {
            Ok(a) => a,
            Err(e) => {
                errors.push(format!("agent.algorithm: {e}"));
                Algorithm::A2c
            }
        },
    };
    // Per-run seeds overwrite this placeholder; see runner::run_experiment.
    let mut agent = match algorithm {
        Algorithm::A2c => AgentHyper::<Real>::a2c(0),
        Algorithm::Ppo => AgentHyper::<Real>::ppo(0),
    };
    let ra = &raw.agent;
    if let Some(v) = ra.gamma {
        agent.gamma = v;
    }
    if let Some(v) = ra.gae_lambda {
        agent.gae_lambda = v;
    }
    if let Some(v) = ra.learning_rate {
        agent.learning_rate = v;
    }
    if let Some(v) = ra.entropy_coef {
        agent.entropy_coef = v;
    }
    if let Some(v) = ra.clip_epsilon {
        agent.clip_epsilon = v;
    }
    if let Some(v) = ra.batch_size {
        agent.batch_size = v;
    }
    if let Some(v) = ra.rollout_length {
        agent.rollout_length = v;
    }
    if let Some(v) = ra.n_epochs {
        agent.n_epochs = v;
    }
    if let Some(v) = ra.total_timesteps {
        agent.total_timesteps = v;
    }
    if let Some(v) = ra.value_coef {
        agent.value_coef = v;
    }
    if let Some(v) = ra.max_grad_norm {
        agent.max_grad_norm = v;
    }
    if let Some(v) = ra.standardize_advantages {
        agent.standardize_advantages = v;
    }
    if let Some(v) = &ra.hidden {
        agent.hidden = v.clone();
    }
    if let Err(e) = agent.validate() {
        errors.push(format!("agent: {e}"));
    }

    if raw.experiment.seeds.is_empty() {
        errors.push("experiment.seeds: need at least one seed".into());
    }
    let unique: BTreeSet<u64> = raw.experiment.seeds.iter().copied().collect();
    if unique.len() != raw.experiment.seeds.len() {
        errors.push("experiment.seeds: duplicate seeds would collide in the run directory".into());
    }
    let parallel = raw.experiment.parallel.unwrap_or(1);
    if parallel == 0 {
        errors.push("experiment.parallel: must be ≥ 1".into());
    }

    let grid = if raw.grid.is_empty() { GridCell::ALL.to_vec() } else { raw.grid.clone() };
    let cells: BTreeSet<GridCell> = grid.iter().copied().collect();
    if cells.len() != grid.len() {
        errors.push("grid: duplicate cells".into());
    }

    let mut baselines = Vec::new();
    for (i, rb) in raw.baselines.iter().enumerate() {
        match rb.kind.parse::<BaselineKind>() {
            Ok(kind) => {
                let mut spec = BaselineSpec::new(kind);
                if let Some(v) = rb.lookback {
                    spec.lookback = v;
                }
                if let Some(v) = rb.rebalance {
                    spec.rebalance = v;
                }
                if let Err(e) = spec.validate() {
                    errors.push(format!("baselines[{i}]: {e}"));
                }
                baselines.push(spec);
            }
            Err(e) => errors.push(format!("baselines[{i}].kind: {e}")),
        }
    }
    // Every report carries the stratified reference strategy.
    if !baselines.iter().any(|b| b.kind == BaselineKind::Stratified) {
        baselines.push(BaselineSpec::new(BaselineKind::Stratified));
    }
    let kinds: BTreeSet<BaselineKind> = baselines.iter().map(|b| b.kind).collect();
    if kinds.len() != baselines.len() {
        errors.push("baselines: duplicate kinds".into());
    }

    if !errors.is_empty() {
        return Err(HarnessError::Validation(errors));
    }

    Ok(ExperimentConfig {
        data,
        train_end: train_end.expect("checked above"),
        trade_end: trade_end.expect("checked above"),
        env,
        indicators,
        agent,
        seeds: raw.experiment.seeds,
        grid,
        baselines,
        out_dir: raw.experiment.out_dir.unwrap_or_else(|| PathBuf::from("out")),
        parallel,
        config_sha256: sha256_hex(text.as_bytes()),
    })
}

/// Strict ISO `YYYY-MM-DD`; a failure lands in `errors` and yields `None` so
/// validation keeps collecting.
fn parse_date(field: &str, s: &str, errors: &mut Vec<String>) -> Option<NaiveDate> {
    match NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        Ok(d) => Some(d),
        Err(e) => {
            errors.push(format!("{field}: {s:?} is not a YYYY-MM-DD date ({e})"));
            None
        }
    }
}

fn resolve_data(raw: &RawData, errors: &mut Vec<String>) -> DataSource {
    let fallback = DataSource::Cache { path: PathBuf::new() };
    let picked = [raw.ohlcv.is_some(), raw.cache.is_some(), raw.synth.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if picked != 1 {
        errors.push("data: provide exactly one of `ohlcv` (+ `esg`), `cache`, or `synth`".into());
        return fallback;
    }
    if let Some(ohlcv) = &raw.ohlcv {
        let Some(esg) = &raw.esg else {
            errors.push("data: `ohlcv` requires a matching `esg` path".into());
            return fallback;
        };
        return DataSource::Csv {
            ohlcv: ohlcv.clone(),
            esg: esg.clone(),
            tickers: raw.tickers.clone(),
        };
    }
    if raw.esg.is_some() {
        errors.push("data: `esg` only makes sense next to `ohlcv`".into());
    }
    if let Some(cache) = &raw.cache {
        if raw.tickers.is_some() {
            errors.push("data: ticker filter is only supported for CSV input".into());
        }
        return DataSource::Cache { path: cache.clone() };
    }
    let synth = raw.synth.as_ref().expect("picked == 1");
    if raw.tickers.is_some() {
        errors.push("data: ticker filter is only supported for CSV input".into());
    }
    if synth.days < MIN_SYNTH_DAYS {
        errors.push(format!("data.synth.days: need at least {MIN_SYNTH_DAYS}, got {}", synth.days));
    }
    let assets: Vec<SynthAsset> = synth
        .assets
        .iter()
        .map(|a| {
            let mut sa = SynthAsset::new(&a.ticker, a.start_price, a.drift, a.volatility, a.esg);
            sa.esg_changes = a.esg_changes.iter().map(|c| (c.day, c.esg)).collect();
            sa
        })
        .collect();
    let mut spec = SynthSpec::new(assets);
    if let Some(v) = synth.common_volatility {
        spec.common_volatility = v;
    }
    if let Some(s) = &synth.start_date {
        if let Some(d) = parse_date("data.synth.start_date", s, errors) {
            spec.start_date = d;
        }
    }
    if let Some(v) = synth.base_volume {
        spec.base_volume = v;
    }
    if let Err(e) = spec.validate() {
        errors.push(format!("data.synth: {e}"));
    }
    DataSource::Synth { spec, days: synth.days, seed: synth.seed }
}

/// Parses a standalone synthetic-market spec: the `[data.synth]` section's
/// schema hoisted to the top level (`days`, `seed`, `[[assets]]`, ...).
pub fn parse_synth_spec(text: &str) -> Result<(SynthSpec, usize, u64), HarnessError> {
    let raw: RawSynth =
        toml::from_str(text).map_err(|e| HarnessError::Validation(vec![e.to_string()]))?;
    let mut errors = Vec::new();
    let data =
        RawData { ohlcv: None, esg: None, cache: None, tickers: None, synth: Some(raw) };
    match resolve_data(&data, &mut errors) {
        DataSource::Synth { spec, days, seed } if errors.is_empty() => Ok((spec, days, seed)),
        _ => Err(HarnessError::Validation(errors)),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
