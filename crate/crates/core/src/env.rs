//! The portfolio-management MDP with ESG grant/tax reward shaping.
//!
//! An episode replays a trade-period panel day by day. Each step takes a
//! per-asset action in [−1, 1], maps it onto the simplex, realizes the
//! weighted simple return from the day's closes, and shapes the reward by
//! how the portfolio's ESG value φ compares to the equal-weight index value
//! ψ: above the index earns a grant, below pays a tax, both proportional to
//! λ·|r| and the φ–ψ gap.

use std::fmt::Write as _;
use std::io::Write;

use chrono::NaiveDate;
use thiserror::Error;

use crate::indicators::FeaturePanel;
use crate::marketdata::{AlignedDataset, EsgSource};
use crate::scalar::{cast, Scalar};

/// Ceiling of the ESG score scale. The grant denominator (ESG_MAX − ψ)
/// reads "room above the index"; the scale is fixed by the data contract.
pub const ESG_MAX: f64 = 10.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("bad env config: {0}")]
    Config(String),
    #[error("usable range has {got} days, need at least {need}")]
    TooShort { need: usize, got: usize },
    #[error("action entry {index} is not finite")]
    NonFiniteAction { index: usize },
    #[error("empty action vector")]
    EmptyAction,
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-positive close for asset {asset} around day {day}")]
    NonPositivePrice { asset: usize, day: usize },
    #[error("weights not on the simplex: {0}")]
    BadWeights(String),
    #[error("episode is done; call reset before stepping")]
    EpisodeDone,
    #[error("portfolio value wiped out on {date}")]
    PortfolioWiped { date: NaiveDate },
    #[error("feature panel does not match dataset: {0}")]
    PanelMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig<F> {
    /// Importance λ ≥ 0 of the ESG shaping term.
    pub lambda: F,
    /// Regulated market (shaped reward R) vs. free market (raw reward r).
    pub regulate: bool,
    /// Include per-asset e, s, g, mean scores in the observation.
    pub esg_in_state: bool,
    /// Proportional cost per unit turnover, in [0, 0.1].
    pub transaction_cost: F,
    pub include_weights_in_obs: bool,
    /// Apply training-set z-scores to the feature section of observations.
    pub normalize_obs: bool,
    /// Must equal [`ESG_MAX`]; carried so the shaping formula reads right.
    pub esg_max: F,
    /// Which ESG field feeds φ and ψ.
    pub esg_source: EsgSource,
    /// Literal reading of the shaped return: also compound it into the
    /// portfolio value. Off by default so reported performance stays a
    /// market quantity and shaping only steers learning.
    pub regulation_affects_value: bool,
}

impl<F: Scalar> Default for EnvConfig<F> {
    fn default() -> Self {
        EnvConfig {
            lambda: F::one(),
            regulate: false,
            esg_in_state: false,
            transaction_cost: F::zero(),
            include_weights_in_obs: false,
            normalize_obs: true,
            esg_max: cast(ESG_MAX),
            esg_source: EsgSource::Mean,
            regulation_affects_value: false,
        }
    }
}

impl<F: Scalar> EnvConfig<F> {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !self.lambda.is_finite() || self.lambda < F::zero() {
            return Err(EnvError::Config(format!("lambda must be finite and ≥ 0, got {}", self.lambda)));
        }
        if !self.transaction_cost.is_finite()
            || self.transaction_cost < F::zero()
            || self.transaction_cost > cast(0.1)
        {
            return Err(EnvError::Config(format!(
                "transaction_cost must lie in [0, 0.1], got {}",
                self.transaction_cost
            )));
        }
        if self.esg_max != cast(ESG_MAX) {
            return Err(EnvError::Config(format!(
                "esg_max is fixed at {ESG_MAX} by the score scale, got {}",
                self.esg_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioState<F> {
    pub day_index: usize,
    pub weights: Vec<F>,
    pub portfolio_value: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo<F> {
    pub raw_return: F,
    pub regulated_return: F,
    pub phi: F,
    pub psi: F,
    pub turnover: F,
    pub cost: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<F> {
    pub observation: Vec<F>,
    /// The training signal: (R_t if regulated else r_t) − cost.
    pub reward: F,
    pub done: bool,
    pub info: StepInfo<F>,
}

/// Equal weights as the exact value `fl(1/A)` repeated, the same scalar the
/// shaping boundary tests compare against.
pub fn equal_weights<F: Scalar>(n: usize) -> Vec<F> {
    vec![F::one() / cast(n as f64); n]
}

/// Maps a raw action to portfolio weights: clamp each entry to [−1, 1],
/// shift by +1, renormalize to sum 1. All mass clamped to zero falls back
/// to equal weights.
pub fn action_to_weights<F: Scalar>(a: &[F]) -> Result<Vec<F>, EnvError> {
    if a.is_empty() {
        return Err(EnvError::EmptyAction);
    }
    for (index, v) in a.iter().enumerate() {
        if !v.is_finite() {
            return Err(EnvError::NonFiniteAction { index });
        }
    }
    let one = F::one();
    let shifted: Vec<F> = a.iter().map(|v| v.min(one).max(-one) + one).collect();
    let sum: F = shifted.iter().copied().sum();
    if sum == F::zero() {
        return Ok(equal_weights(a.len()));
    }
    Ok(shifted.into_iter().map(|v| v / sum).collect())
}

/// Weighted simple return Σ_j w_j (p_t,j / p_{t−1,j} − 1).
pub fn portfolio_return<F: Scalar>(
    w: &[F],
    closes_t: &[F],
    closes_prev: &[F],
) -> Result<F, EnvError> {
    if closes_t.len() != w.len() || closes_prev.len() != w.len() {
        return Err(EnvError::LengthMismatch {
            what: "price vectors",
            expected: w.len(),
            got: closes_t.len().min(closes_prev.len()),
        });
    }
    for (asset, (pt, pp)) in closes_t.iter().zip(closes_prev).enumerate() {
        if !pt.is_finite() || *pt <= F::zero() || !pp.is_finite() || *pp <= F::zero() {
            return Err(EnvError::NonPositivePrice { asset, day: 0 });
        }
    }
    Ok(w.iter()
        .zip(closes_t.iter().zip(closes_prev))
        .map(|(wi, (pt, pp))| *wi * (*pt / *pp - F::one()))
        .sum())
}

/// Portfolio ESG value φ = Σ_i w_i ε_i.
pub fn esg_score<F: Scalar>(w: &[F], esg: &[F]) -> Result<F, EnvError> {
    if esg.len() != w.len() {
        return Err(EnvError::LengthMismatch { what: "ESG scores", expected: w.len(), got: esg.len() });
    }
    if w.is_empty() {
        return Err(EnvError::EmptyAction);
    }
    Ok(w.iter().zip(esg).map(|(wi, e)| *wi * *e).sum())
}

/// Index ESG value ψ: φ at equal weights 1/A. Accumulates in exactly the
/// same multiply-then-sum order as [`esg_score`], so an equal-weight
/// portfolio lands on the φ = ψ boundary bit-exactly.
pub fn index_esg<F: Scalar>(esg: &[F]) -> Result<F, EnvError> {
    if esg.is_empty() {
        return Err(EnvError::EmptyAction);
    }
    let w = F::one() / cast(esg.len() as f64);
    Ok(esg.iter().map(|e| w * *e).sum())
}

/// ESG grant/tax shaping of a raw return. Above the index (φ > ψ) the
/// return is granted a bonus, below it pays a tax, both bounded by λ|r|:
///
/// ```text
/// φ > ψ:  R = r + λ·|r|·(φ − ψ)/(10 − ψ)
/// φ < ψ:  R = r − λ·|r|·(ψ − φ)/ψ
/// φ = ψ:  R = r
/// ```
///
/// Each branch's precondition makes its denominator positive; both are
/// asserted at runtime.
pub fn regulate<F: Scalar>(r: F, phi: F, psi: F, lambda: F) -> F {
    let esg_max: F = cast(ESG_MAX);
    debug_assert!(phi >= F::zero() && phi <= esg_max, "phi out of range: {phi}");
    debug_assert!(psi >= F::zero() && psi <= esg_max, "psi out of range: {psi}");
    debug_assert!(lambda >= F::zero(), "negative lambda: {lambda}");
    if phi > psi {
        assert!(psi < esg_max, "grant branch needs psi < {ESG_MAX}, got {psi}");
        r + lambda * r.abs() * (phi - psi) / (esg_max - psi)
    } else if phi < psi {
        assert!(psi > F::zero(), "tax branch needs psi > 0, got {psi}");
        r - lambda * r.abs() * (psi - phi) / psi
    } else {
        r
    }
}

/// Per-dimension z-score statistics fitted on training-period observations
/// (feature section only; appended weights are already unit-scale).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<F> {
    mean: Vec<F>,
    std: Vec<F>,
}

impl<F: Scalar> NormStats<F> {
    /// Population mean/std per feature dimension over the usable days.
    /// Dimensions with std below 1e-12 normalize with std 1 instead.
    pub fn fit(
        ds: &AlignedDataset<F>,
        panel: &FeaturePanel<F>,
        cfg: &EnvConfig<F>,
    ) -> Result<Self, EnvError> {
        check_panel(ds, panel)?;
        let days = panel.usable_start()..ds.n_days();
        let n = days.len();
        if n == 0 {
            return Err(EnvError::TooShort { need: 1, got: 0 });
        }
        let dim = raw_features(ds, panel, cfg, panel.usable_start()).len();
        let mut mean = vec![F::zero(); dim];
        let mut m2 = vec![F::zero(); dim];
        for day in days {
            for (i, v) in raw_features(ds, panel, cfg, day).into_iter().enumerate() {
                mean[i] += v;
                m2[i] += v * v;
            }
        }
        let nf: F = cast(n as f64);
        let floor: F = cast(1e-12);
        let std = mean
            .iter_mut()
            .zip(m2)
            .map(|(m, sq)| {
                *m /= nf;
                let var = (sq / nf - *m * *m).max(F::zero());
                let s = var.sqrt();
                if s < floor {
                    F::one()
                } else {
                    s
                }
            })
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn from_parts(mean: Vec<F>, std: Vec<F>) -> Result<Self, EnvError> {
        if mean.len() != std.len() {
            return Err(EnvError::LengthMismatch { what: "norm stats", expected: mean.len(), got: std.len() });
        }
        if std.iter().any(|s| !s.is_finite() || *s <= F::zero()) {
            return Err(EnvError::Config("norm std entries must be positive".into()));
        }
        Ok(NormStats { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[F] {
        &self.mean
    }

    pub fn std(&self) -> &[F] {
        &self.std
    }

    fn apply(&self, xs: &mut [F]) {
        for (i, x) in xs.iter_mut().take(self.mean.len()).enumerate() {
            *x = (*x - self.mean[i]) / self.std[i];
        }
    }
}

/// The observation's feature section for one day: per asset
/// [open, high, low, close, volume, indicators…, (e, s, g, mean)].
fn raw_features<F: Scalar>(
    ds: &AlignedDataset<F>,
    panel: &FeaturePanel<F>,
    cfg: &EnvConfig<F>,
    day: usize,
) -> Vec<F> {
    let a = ds.n_assets();
    let per_asset = 5 + panel.n_features() + if cfg.esg_in_state { 4 } else { 0 };
    let mut xs = Vec::with_capacity(a * per_asset);
    for asset in 0..a {
        let b = ds.bar(day, asset);
        xs.extend_from_slice(&[b.open, b.high, b.low, b.close, b.volume]);
        xs.extend_from_slice(panel.features(day, asset));
        if cfg.esg_in_state {
            let r = ds.esg(day, asset);
            xs.extend_from_slice(&[r.e, r.s, r.g, r.esg_mean()]);
        }
    }
    xs
}

fn check_panel<F: Scalar>(ds: &AlignedDataset<F>, panel: &FeaturePanel<F>) -> Result<(), EnvError> {
    if panel.n_days() != ds.n_days() || panel.n_assets() != ds.n_assets() {
        return Err(EnvError::PanelMismatch(format!(
            "panel is {} days × {} assets, dataset is {} × {}",
            panel.n_days(),
            panel.n_assets(),
            ds.n_days(),
            ds.n_assets()
        )));
    }
    Ok(())
}

/// Deterministic replay environment over one aligned panel.
///
/// Multiple instances may share the same dataset and panel across threads;
/// each instance owns only its episode state.
pub struct PortfolioEnv<'d, F: Scalar> {
    ds: &'d AlignedDataset<F>,
    panel: &'d FeaturePanel<F>,
    cfg: EnvConfig<F>,
    norm: Option<NormStats<F>>,
    day: usize,
    weights: Vec<F>,
    value: F,
    done: bool,
}

impl<'d, F: Scalar> PortfolioEnv<'d, F> {
    /// `norm` is required exactly when `cfg.normalize_obs` is set; fit it on
    /// the training panel and reuse it for the trade panel.
    pub fn new(
        ds: &'d AlignedDataset<F>,
        panel: &'d FeaturePanel<F>,
        cfg: EnvConfig<F>,
        norm: Option<NormStats<F>>,
    ) -> Result<Self, EnvError> {
        cfg.validate()?;
        check_panel(ds, panel)?;
        let usable = ds.n_days() - panel.usable_start();
        if usable < 2 {
            return Err(EnvError::TooShort { need: 2, got: usable });
        }
        match (&norm, cfg.normalize_obs) {
            (None, true) => {
                return Err(EnvError::Config("normalize_obs set but no norm stats supplied".into()))
            }
            (Some(_), false) => {
                return Err(EnvError::Config("norm stats supplied but normalize_obs is off".into()))
            }
            (Some(n), true) => {
                let dim = raw_features(ds, panel, &cfg, panel.usable_start()).len();
                if n.dim() != dim {
                    return Err(EnvError::LengthMismatch {
                        what: "norm stats",
                        expected: dim,
                        got: n.dim(),
                    });
                }
            }
            (None, false) => {}
        }
        let a = ds.n_assets();
        Ok(PortfolioEnv {
            ds,
            panel,
            cfg,
            norm,
            day: panel.usable_start(),
            weights: equal_weights(a),
            value: F::one(),
            done: false,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.ds.n_assets()
    }

    pub fn config(&self) -> &EnvConfig<F> {
        &self.cfg
    }

    pub fn norm_stats(&self) -> Option<&NormStats<F>> {
        self.norm.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn state(&self) -> PortfolioState<F> {
        PortfolioState {
            day_index: self.day,
            weights: self.weights.clone(),
            portfolio_value: self.value,
        }
    }

    /// Calendar date of the current day.
    pub fn date(&self) -> NaiveDate {
        self.ds.calendar()[self.day]
    }

    pub fn obs_dim(&self) -> usize {
        let a = self.ds.n_assets();
        let per_asset = 5 + self.panel.n_features() + if self.cfg.esg_in_state { 4 } else { 0 };
        a * per_asset + if self.cfg.include_weights_in_obs { a } else { 0 }
    }

    fn observation(&self) -> Vec<F> {
        let mut xs = raw_features(self.ds, self.panel, &self.cfg, self.day);
        if let Some(norm) = &self.norm {
            norm.apply(&mut xs);
        }
        if self.cfg.include_weights_in_obs {
            xs.extend_from_slice(&self.weights);
        }
        debug_assert_eq!(xs.len(), self.obs_dim());
        debug_assert!(xs.iter().all(|v| v.is_finite()), "non-finite observation");
        xs
    }

    /// Starts a fresh episode at the first usable day with equal weights
    /// and unit portfolio value, returning the initial observation.
    /// Replay dynamics are deterministic; `_seed` is reserved for stochastic
    /// variants so the call shape stays stable.
    pub fn reset(&mut self, _seed: u64) -> Vec<F> {
        self.day = self.panel.usable_start();
        self.weights = equal_weights(self.ds.n_assets());
        self.value = F::one();
        self.done = false;
        self.observation()
    }

    pub fn step(&mut self, action: &[F]) -> Result<StepOutcome<F>, EnvError> {
        if action.len() != self.ds.n_assets() {
            return Err(EnvError::LengthMismatch {
                what: "action",
                expected: self.ds.n_assets(),
                got: action.len(),
            });
        }
        let w = action_to_weights(action)?;
        self.step_with_weights(w)
    }

    /// Advances one day under explicit target weights. Baselines and
    /// forced-weight experiments use this to bypass the action mapping.
    pub fn step_with_weights(&mut self, w: Vec<F>) -> Result<StepOutcome<F>, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if w.len() != self.ds.n_assets() {
            return Err(EnvError::LengthMismatch {
                what: "weights",
                expected: self.ds.n_assets(),
                got: w.len(),
            });
        }
        let sum: F = w.iter().copied().sum();
        if w.iter().any(|v| !v.is_finite() || *v < F::zero()) || (sum - F::one()).abs() > cast(1e-9)
        {
            return Err(EnvError::BadWeights(format!("sum {sum}")));
        }

        let turnover: F = w.iter().zip(&self.weights).map(|(a, b)| (*a - *b).abs()).sum();
        let cost = self.cfg.transaction_cost * turnover;

        let next = self.day + 1;
        let closes_prev: Vec<F> = self.ds.closes(self.day).collect();
        let closes_next: Vec<F> = self.ds.closes(next).collect();
        let raw = portfolio_return(&w, &closes_next, &closes_prev)?;

        let esg: Vec<F> = self.ds.esg_scores(next, self.cfg.esg_source).collect();
        let phi = esg_score(&w, &esg)?;
        let psi = index_esg(&esg)?;
        debug_assert!(phi >= -cast::<F>(1e-12) && phi <= self.cfg.esg_max + cast(1e-12));
        let regulated = regulate(raw, phi, psi, self.cfg.lambda);

        let reward = if self.cfg.regulate { regulated } else { raw } - cost;
        let value_return = if self.cfg.regulation_affects_value { regulated } else { raw };
        let growth = F::one() + value_return - cost;
        if growth <= F::zero() {
            self.done = true;
            return Err(EnvError::PortfolioWiped { date: self.ds.calendar()[next] });
        }

        self.value *= growth;
        self.day = next;
        self.weights = w;
        self.done = next + 1 == self.ds.n_days();

        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.done,
            info: StepInfo {
                raw_return: raw,
                regulated_return: regulated,
                phi,
                psi,
                turnover,
                cost,
            },
        })
    }

    /// Hash of everything that fixes observation and reward semantics:
    /// config, tickers, observation layout, and normalization statistics.
    /// Dates are deliberately excluded so a policy trained on the train
    /// split matches the trade split.
    pub fn fingerprint(&self) -> String {
        let c = &self.cfg;
        let mut s = String::new();
        let _ = write!(
            s,
            "lambda={};regulate={};esg_in_state={};tc={};w_obs={};norm_obs={};esg_max={};src={};rav={};",
            c.lambda,
            c.regulate,
            c.esg_in_state,
            c.transaction_cost,
            c.include_weights_in_obs,
            c.normalize_obs,
            c.esg_max,
            c.esg_source.as_str(),
            c.regulation_affects_value
        );
        let _ = write!(s, "tickers={};", self.ds.tickers().join(","));
        let _ = write!(s, "obs_dim={};", self.obs_dim());
        let _ = write!(s, "features={};", self.panel.feature_names().join(","));
        match &self.norm {
            Some(n) => {
                let _ = write!(s, "norm_mean=");
                for v in n.mean() {
                    let _ = write!(s, "{v},");
                }
                let _ = write!(s, ";norm_std=");
                for v in n.std() {
                    let _ = write!(s, "{v},");
                }
            }
            None => {
                let _ = write!(s, "norm=none");
            }
        }
        format!("{:016x}", fnv1a64(s.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-step record of one full episode, in calendar order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeResult<F> {
    pub dates: Vec<NaiveDate>,
    pub raw_returns: Vec<F>,
    pub regulated_returns: Vec<F>,
    /// The training signal the env emitted (shaped or raw, net of cost).
    pub rewards: Vec<F>,
    pub phi: Vec<F>,
    pub psi: Vec<F>,
    pub turnover: Vec<F>,
    pub cost: Vec<F>,
    /// Portfolio value after each step (starts from 1.0 before the first).
    pub values: Vec<F>,
    pub weights: Vec<Vec<F>>,
    pub final_value: F,
}

impl<F: Scalar> EpisodeResult<F> {
    pub fn new() -> Self {
        EpisodeResult { final_value: F::one(), ..Default::default() }
    }

    pub fn record(&mut self, date: NaiveDate, reward: F, info: &StepInfo<F>, value: F, weights: &[F]) {
        self.dates.push(date);
        self.raw_returns.push(info.raw_return);
        self.regulated_returns.push(info.regulated_return);
        self.rewards.push(reward);
        self.phi.push(info.phi);
        self.psi.push(info.psi);
        self.turnover.push(info.turnover);
        self.cost.push(info.cost);
        self.values.push(value);
        self.weights.push(weights.to_vec());
        self.final_value = value;
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Daily market returns net of transaction costs; the series the metric
    /// suite evaluates.
    pub fn net_returns(&self) -> Vec<F> {
        self.raw_returns.iter().zip(&self.cost).map(|(r, c)| *r - *c).collect()
    }

    /// Mean daily portfolio ESG value over the episode.
    pub fn mean_phi(&self) -> F {
        if self.phi.is_empty() {
            return F::nan();
        }
        self.phi.iter().copied().sum::<F>() / cast(self.phi.len() as f64)
    }

    pub fn write_trace_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "day,date,raw_return,regulated_return,phi,psi,turnover,cost,value")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                i,
                self.dates[i],
                self.raw_returns[i],
                self.regulated_returns[i],
                self.phi[i],
                self.psi[i],
                self.turnover[i],
                self.cost[i],
                self.values[i]
            )?;
        }
        Ok(())
    }

    pub fn write_weights_csv<W: Write>(&self, tickers: &[String], out: &mut W) -> std::io::Result<()> {
        write!(out, "date")?;
        for t in tickers {
            write!(out, ",{t}")?;
        }
        writeln!(out)?;
        for (date, w) in self.dates.iter().zip(&self.weights) {
            write!(out, "{date}")?;
            for v in w {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_equity_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "date,value")?;
        for (date, v) in self.dates.iter().zip(&self.values) {
            writeln!(out, "{date},{v}")?;
        }
        Ok(())
    }
}
