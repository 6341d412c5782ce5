//! Risk-performance metrics over daily return series and the two classical
//! baselines (min-variance, stratified index) the learned agents are
//! compared against.
//!
//! Metrics that can be undefined on a given series (sharpe on zero
//! volatility, sortino with no losing days, calmar with no drawdown, omega
//! with no losses) come back as typed [`MetricOutcome::Degenerate`] values
//! rather than NaNs, so report tables can distinguish "undefined" from a
//! number.

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::env::{equal_weights, EnvConfig, EnvError, EpisodeResult, PortfolioEnv};
use crate::indicators::FeaturePanel;
use crate::marketdata::{AlignedDataset, EsgSource};
use crate::scalar::{cast, Scalar};

/// Annualization base for daily data.
pub const TRADING_DAYS_PER_YEAR: usize = 252;

/// Φ⁻¹(0.05), the 5% quantile of the standard normal.
pub const GAUSSIAN_VAR_Z: f64 = -1.6448536269514722;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("need at least {need} returns, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("return {index} is invalid: {value} (must be finite and > -1)")]
    InvalidReturn { index: usize, value: String },
    #[error("bad return matrix: {0}")]
    BadMatrix(String),
    #[error("min-variance did not converge: last step moved weights by {residual}")]
    NonConvergence { residual: String },
    #[error("min-variance needs {need} days of history before trading starts, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error("bad baseline spec: {0}")]
    BadSpec(String),
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateReason {
    /// Return series has no dispersion; sharpe's denominator vanishes.
    ZeroVolatility,
    /// No negative returns; sortino's downside deviation vanishes.
    NoDownside,
    /// Equity never dips below its running maximum; calmar divides by 0.
    NoDrawdown,
    /// No losing days; omega's denominator vanishes.
    NoLosses,
}

impl fmt::Display for DegenerateReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DegenerateReason::ZeroVolatility => "zero volatility",
            DegenerateReason::NoDownside => "no downside returns",
            DegenerateReason::NoDrawdown => "no drawdown",
            DegenerateReason::NoLosses => "no losses",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricOutcome<F> {
    Value(F),
    Degenerate(DegenerateReason),
}

impl<F: Scalar> MetricOutcome<F> {
    pub fn value(&self) -> Option<F> {
        match self {
            MetricOutcome::Value(v) => Some(*v),
            MetricOutcome::Degenerate(_) => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, MetricOutcome::Degenerate(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricName {
    AnnualReturn,
    CumulativeReturn,
    AnnualVolatility,
    Sharpe,
    Calmar,
    Omega,
    Sortino,
    Stability,
    MaxDrawdown,
    DailyVar,
}

impl MetricName {
    pub const ALL: [MetricName; 10] = [
        MetricName::AnnualReturn,
        MetricName::CumulativeReturn,
        MetricName::AnnualVolatility,
        MetricName::Sharpe,
        MetricName::Calmar,
        MetricName::Omega,
        MetricName::Sortino,
        MetricName::Stability,
        MetricName::MaxDrawdown,
        MetricName::DailyVar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::AnnualReturn => "annual_return",
            MetricName::CumulativeReturn => "cumulative_return",
            MetricName::AnnualVolatility => "annual_volatility",
            MetricName::Sharpe => "sharpe",
            MetricName::Calmar => "calmar",
            MetricName::Omega => "omega",
            MetricName::Sortino => "sortino",
            MetricName::Stability => "stability",
            MetricName::MaxDrawdown => "max_drawdown",
            MetricName::DailyVar => "daily_var",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricName::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport<F> {
    pub annual_return: F,
    pub cumulative_return: F,
    pub annual_volatility: F,
    pub sharpe: MetricOutcome<F>,
    pub calmar: MetricOutcome<F>,
    pub omega: MetricOutcome<F>,
    pub sortino: MetricOutcome<F>,
    pub stability: F,
    pub max_drawdown: F,
    pub daily_var: F,
}

impl<F: Scalar> MetricsReport<F> {
    pub fn get(&self, name: MetricName) -> MetricOutcome<F> {
        match name {
            MetricName::AnnualReturn => MetricOutcome::Value(self.annual_return),
            MetricName::CumulativeReturn => MetricOutcome::Value(self.cumulative_return),
            MetricName::AnnualVolatility => MetricOutcome::Value(self.annual_volatility),
            MetricName::Sharpe => self.sharpe,
            MetricName::Calmar => self.calmar,
            MetricName::Omega => self.omega,
            MetricName::Sortino => self.sortino,
            MetricName::Stability => MetricOutcome::Value(self.stability),
            MetricName::MaxDrawdown => MetricOutcome::Value(self.max_drawdown),
            MetricName::DailyVar => MetricOutcome::Value(self.daily_var),
        }
    }

    pub fn degenerate_names(&self) -> Vec<MetricName> {
        MetricName::ALL.into_iter().filter(|n| self.get(*n).is_degenerate()).collect()
    }
}

fn validate_returns<F: Scalar>(returns: &[F], need: usize) -> Result<(), AnalyticsError> {
    if returns.len() < need {
        return Err(AnalyticsError::TooShort { need, got: returns.len() });
    }
    for (index, r) in returns.iter().enumerate() {
        if !r.is_finite() || *r <= -F::one() {
            return Err(AnalyticsError::InvalidReturn { index, value: format!("{r}") });
        }
    }
    Ok(())
}

fn sample_std<F: Scalar>(xs: &[F], mean: F) -> F {
    let ss: F = xs.iter().map(|x| (*x - mean) * (*x - mean)).sum();
    (ss / cast(xs.len() as f64 - 1.0)).sqrt()
}

/// Linear-interpolation percentile between order statistics, the same
/// h = (n−1)·p rule numpy uses by default.
fn percentile<F: Scalar>(xs: &[F], p: f64) -> F {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("inputs validated finite"));
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= s.len() {
        return s[s.len() - 1];
    }
    s[lo] + cast::<F>(h - lo as f64) * (s[lo + 1] - s[lo])
}

/// The full metric suite over one daily return series.
///
/// Definitions: cumulative = Π(1+r) − 1; annual_return =
/// (1+cumulative)^(ppy/T) − 1; annual_vol = sample std·√ppy; sharpe =
/// mean/std·√ppy; sortino like sharpe with downside deviation
/// √(Σ_{r<0} r²/T); calmar = annual_return/|max_drawdown|; omega =
/// Σmax(r,0)/Σmax(−r,0); stability = R² of an OLS fit of cumulative
/// log-equity against time; max_drawdown = min_t(equity_t/runmax_t − 1)
/// with the curve anchored at equity 1 before the first return; daily_var =
/// empirical 5th percentile of returns.
pub fn compute_metrics<F: Scalar>(
    returns: &[F],
    periods_per_year: usize,
) -> Result<MetricsReport<F>, AnalyticsError> {
    validate_returns(returns, 2)?;
    if periods_per_year == 0 {
        return Err(AnalyticsError::BadMatrix("periods_per_year must be ≥ 1".into()));
    }
    let n = returns.len();
    let nf: F = cast(n as f64);
    let one = F::one();
    let zero = F::zero();
    let ppy: F = cast(periods_per_year as f64);
    let sqrt_ppy = ppy.sqrt();

    let cumulative_return = returns.iter().fold(one, |acc, r| acc * (one + *r)) - one;
    let annual_return = (one + cumulative_return).powf(ppy / nf) - one;
    let mean = returns.iter().copied().sum::<F>() / nf;
    let std = sample_std(returns, mean);
    let annual_volatility = std * sqrt_ppy;

    // An exactly constant series accumulates rounding noise of order 1e-17
    // in std; treat anything below this floor as zero dispersion.
    let vol_floor = cast::<F>(1e-14) * one.max(mean.abs());
    let sharpe = if std <= vol_floor {
        MetricOutcome::Degenerate(DegenerateReason::ZeroVolatility)
    } else {
        MetricOutcome::Value(mean / std * sqrt_ppy)
    };

    let downside_ss: F = returns.iter().filter(|r| **r < zero).map(|r| *r * *r).sum();
    let sortino = if downside_ss == zero {
        MetricOutcome::Degenerate(DegenerateReason::NoDownside)
    } else {
        MetricOutcome::Value(mean / (downside_ss / nf).sqrt() * sqrt_ppy)
    };

    let mut equity = one;
    let mut running_max = one;
    let mut max_drawdown = zero;
    for r in returns {
        equity *= one + *r;
        running_max = running_max.max(equity);
        max_drawdown = max_drawdown.min(equity / running_max - one);
    }
    let calmar = if max_drawdown == zero {
        MetricOutcome::Degenerate(DegenerateReason::NoDrawdown)
    } else {
        MetricOutcome::Value(annual_return / max_drawdown.abs())
    };

    let gains: F = returns.iter().map(|r| r.max(zero)).sum();
    let losses: F = returns.iter().map(|r| (-*r).max(zero)).sum();
    let omega = if losses == zero {
        MetricOutcome::Degenerate(DegenerateReason::NoLosses)
    } else {
        MetricOutcome::Value(gains / losses)
    };

    let stability = {
        let mut y = Vec::with_capacity(n);
        let mut acc = zero;
        for r in returns {
            acc += (one + *r).ln();
            y.push(acc);
        }
        let xm: F = cast((n as f64 - 1.0) / 2.0);
        let ym = y.iter().copied().sum::<F>() / nf;
        let mut sxx = zero;
        let mut sxy = zero;
        let mut syy = zero;
        for (i, yi) in y.iter().enumerate() {
            let dx = cast::<F>(i as f64) - xm;
            let dy = *yi - ym;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        if syy == zero {
            // A flat log-equity curve is perfectly explained by a flat line.
            one
        } else {
            (sxy * sxy / (sxx * syy)).min(one).max(zero)
        }
    };

    let daily_var = percentile(returns, 0.05);

    let report = MetricsReport {
        annual_return,
        cumulative_return,
        annual_volatility,
        sharpe,
        calmar,
        omega,
        sortino,
        stability,
        max_drawdown,
        daily_var,
    };
    for name in MetricName::ALL {
        if let MetricOutcome::Value(v) = report.get(name) {
            if !v.is_finite() {
                return Err(AnalyticsError::NonFinite { what: name.as_str() });
            }
        }
    }
    Ok(report)
}

/// Parametric alternative to the empirical daily VaR: mean + Φ⁻¹(0.05)·std
/// under a normal model of daily returns.
pub fn gaussian_daily_var<F: Scalar>(returns: &[F]) -> Result<F, AnalyticsError> {
    validate_returns(returns, 2)?;
    let mean = returns.iter().copied().sum::<F>() / cast(returns.len() as f64);
    Ok(mean + cast::<F>(GAUSSIAN_VAR_Z) * sample_std(returns, mean))
}

/// JSON object with the ten metric keys in report order (degenerate metrics
/// are null) plus a `degenerate` array naming them.
pub fn write_metrics_json<F: Scalar, W: Write>(
    report: &MetricsReport<F>,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "{{")?;
    for name in MetricName::ALL {
        match report.get(name) {
            MetricOutcome::Value(v) => writeln!(out, "  \"{name}\": {v},")?,
            MetricOutcome::Degenerate(_) => writeln!(out, "  \"{name}\": null,")?,
        }
    }
    let degenerate: Vec<String> =
        report.degenerate_names().iter().map(|n| format!("\"{n}\"")).collect();
    writeln!(out, "  \"degenerate\": [{}]", degenerate.join(", "))?;
    writeln!(out, "}}")
}

/// Header for the one-row CSV form of a report.
pub fn metrics_csv_header() -> String {
    let mut cols: Vec<&str> = MetricName::ALL.iter().map(|n| n.as_str()).collect();
    cols.push("degenerate");
    cols.join(",")
}

/// One CSV row matching [`metrics_csv_header`]; degenerate metrics leave an
/// empty cell and are listed semicolon-joined in the final column.
pub fn metrics_csv_row<F: Scalar>(report: &MetricsReport<F>) -> String {
    let mut cells: Vec<String> = MetricName::ALL
        .iter()
        .map(|n| match report.get(*n) {
            MetricOutcome::Value(v) => format!("{v}"),
            MetricOutcome::Degenerate(_) => String::new(),
        })
        .collect();
    let names: Vec<&str> = report.degenerate_names().iter().map(|n| n.as_str()).collect();
    cells.push(names.join(";"));
    cells.join(",")
}

/// Long-only minimum-variance weights from a T×A window of daily returns
/// (rows are days). Sample covariance with ridge 1e-8·I, minimized over the
/// simplex by projected gradient descent with step 1/(2·L) for a Gershgorin
/// bound L ≥ λ_max; iteration stops once no weight moves by more than
/// 1e-12, well inside the promised 1e-10 objective tolerance.
pub fn min_variance_weights<F: Scalar>(returns: &[Vec<F>]) -> Result<Vec<F>, AnalyticsError> {
    let t = returns.len();
    if t < 2 {
        return Err(AnalyticsError::TooShort { need: 2, got: t });
    }
    let a = returns[0].len();
    if a == 0 {
        return Err(AnalyticsError::BadMatrix("zero assets".into()));
    }
    for (i, row) in returns.iter().enumerate() {
        if row.len() != a {
            return Err(AnalyticsError::BadMatrix(format!(
                "row {i} has {} entries, expected {a}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(AnalyticsError::BadMatrix(format!("row {i} contains a non-finite return")));
        }
    }

    let nf: F = cast(t as f64);
    let mut means = vec![F::zero(); a];
    for row in returns {
        for (m, v) in means.iter_mut().zip(row) {
            *m += *v;
        }
    }
    for m in means.iter_mut() {
        *m /= nf;
    }
    let ridge: F = cast(1e-8);
    let denom: F = cast(t as f64 - 1.0);
    let mut cov = vec![F::zero(); a * a];
    for row in returns {
        for i in 0..a {
            let di = row[i] - means[i];
            for j in i..a {
                cov[i * a + j] += di * (row[j] - means[j]);
            }
        }
    }
    for i in 0..a {
        for j in i..a {
            let v = cov[i * a + j] / denom;
            cov[i * a + j] = v;
            cov[j * a + i] = v;
        }
        cov[i * a + i] += ridge;
    }
    solve_min_variance(&cov, a)
}

fn solve_min_variance<F: Scalar>(cov: &[F], a: usize) -> Result<Vec<F>, AnalyticsError> {
    debug_assert_eq!(cov.len(), a * a);
    let gershgorin = (0..a)
        .map(|i| (0..a).map(|j| cov[i * a + j].abs()).sum::<F>())
        .fold(F::zero(), |m, v| m.max(v));
    if gershgorin == F::zero() {
        return Ok(equal_weights(a));
    }
    let step = F::one() / (cast::<F>(2.0) * gershgorin);
    let tol: F = cast(1e-12);
    const MAX_ITERS: usize = 1_000_000;

    let mut w: Vec<F> = equal_weights(a);
    let mut grad = vec![F::zero(); a];
    let mut residual = F::infinity();
    for _ in 0..MAX_ITERS {
        for (i, g) in grad.iter_mut().enumerate() {
            *g = cast::<F>(2.0) * (0..a).map(|j| cov[i * a + j] * w[j]).sum::<F>();
        }
        let moved: Vec<F> = w.iter().zip(&grad).map(|(wi, g)| *wi - step * *g).collect();
        let next = project_simplex(&moved);
        residual = w
            .iter()
            .zip(&next)
            .map(|(a, b)| (*a - *b).abs())
            .fold(F::zero(), |m, v| m.max(v));
        w = next;
        if residual <= tol {
            return Ok(w);
        }
    }
    Err(AnalyticsError::NonConvergence { residual: format!("{residual}") })
}

/// Euclidean projection onto the probability simplex (sort-based).
fn project_simplex<F: Scalar>(v: &[F]) -> Vec<F> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut cumsum = F::zero();
    let mut theta = F::zero();
    for (i, ui) in u.iter().enumerate() {
        cumsum += *ui;
        let t = (cumsum - F::one()) / cast((i + 1) as f64);
        if *ui - t > F::zero() {
            theta = t;
        }
    }
    v.iter().map(|x| (*x - theta).max(F::zero())).collect()
}

/// Portfolio variance wᵀΣw for a row-major covariance; the quantity
/// min-variance minimizes, exposed for optimality checks.
pub fn portfolio_variance<F: Scalar>(cov: &[F], w: &[F]) -> F {
    let a = w.len();
    debug_assert_eq!(cov.len(), a * a);
    let mut total = F::zero();
    for i in 0..a {
        for j in 0..a {
            total += w[i] * cov[i * a + j] * w[j];
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaselineKind {
    MinVariance,
    Stratified,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::MinVariance => "min_variance",
            BaselineKind::Stratified => "stratified",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min_variance" => Ok(BaselineKind::MinVariance),
            "stratified" => Ok(BaselineKind::Stratified),
            other => {
                Err(format!("unknown baseline `{other}` (expected min_variance or stratified)"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    /// Trailing window of daily returns feeding the covariance estimate.
    pub lookback: usize,
    /// Re-solve the weights every this many trading days.
    pub rebalance: usize,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        BaselineSpec { kind, lookback: 30, rebalance: 21 }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.lookback < 2 {
            return Err(AnalyticsError::BadSpec(format!("lookback must be ≥ 2, got {}", self.lookback)));
        }
        if self.rebalance == 0 {
            return Err(AnalyticsError::BadSpec("rebalance must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Replays a classical baseline through the trading env so its accounting
/// (turnover costs, φ/ψ series, portfolio value) matches the agents'
/// exactly. The env runs unregulated with λ = 0, so recorded regulated
/// returns equal raw returns. Min-variance covariances use closes up to
/// and including the decision day, never the day being traded into.
pub fn run_baseline<F: Scalar>(
    ds: &AlignedDataset<F>,
    panel: &FeaturePanel<F>,
    spec: &BaselineSpec,
    transaction_cost: F,
    esg_source: EsgSource,
) -> Result<EpisodeResult<F>, AnalyticsError> {
    spec.validate()?;
    let cfg = EnvConfig {
        lambda: F::zero(),
        regulate: false,
        esg_in_state: false,
        transaction_cost,
        normalize_obs: false,
        esg_source,
        ..EnvConfig::default()
    };
    let mut env = PortfolioEnv::new(ds, panel, cfg, None)?;
    env.reset(0);
    let a = ds.n_assets();

    if spec.kind == BaselineKind::MinVariance && panel.usable_start() < spec.lookback {
        return Err(AnalyticsError::InsufficientHistory {
            need: spec.lookback,
            have: panel.usable_start(),
        });
    }

    let mut result = EpisodeResult::new();
    let mut current = equal_weights(a);
    let mut step = 0usize;
    while !env.is_done() {
        let w = match spec.kind {
            BaselineKind::Stratified => equal_weights(a),
            BaselineKind::MinVariance => {
                if step % spec.rebalance == 0 {
                    let day = env.state().day_index;
                    current = min_variance_weights(&trailing_returns(ds, day, spec.lookback))?;
                }
                current.clone()
            }
        };
        let out = env.step_with_weights(w)?;
        let state = env.state();
        result.record(env.date(), out.reward, &out.info, state.portfolio_value, &state.weights);
        step += 1;
    }
    Ok(result)
}

/// Daily simple returns for the `lookback` days ending at `day` inclusive.
/// Caller guarantees `day ≥ lookback` so every row has a prior close.
fn trailing_returns<F: Scalar>(ds: &AlignedDataset<F>, day: usize, lookback: usize) -> Vec<Vec<F>> {
    debug_assert!(day >= lookback);
    let one = F::one();
    (day + 1 - lookback..=day)
        .map(|d| {
            ds.closes(d)
                .zip(ds.closes(d - 1))
                .map(|(now, prev)| now / prev - one)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::{compute_features, IndicatorConfig};
    use crate::marketdata::{EsgRecord, OhlcvBar};
    use chrono::NaiveDate;

    fn report(returns: &[f64]) -> MetricsReport<f64> {
        compute_metrics(returns, TRADING_DAYS_PER_YEAR).unwrap()
    }

    #[test]
    fn cumulative_hand_product() {
        let r = report(&[0.1, -0.1]);
        assert!((r.cumulative_return - -0.01).abs() < 1e-15);
    }

    #[test]
    fn monotone_up_series_has_no_drawdown_and_degenerate_calmar_omega() {
        let r = report(&[0.01, 0.02, 0.005, 0.03]);
        assert_eq!(r.max_drawdown, 0.0);
        assert_eq!(r.calmar, MetricOutcome::Degenerate(DegenerateReason::NoDrawdown));
        assert_eq!(r.omega, MetricOutcome::Degenerate(DegenerateReason::NoLosses));
        assert_eq!(r.sortino, MetricOutcome::Degenerate(DegenerateReason::NoDownside));
        assert!(r.annual_return > 0.0);
    }

    #[test]
    fn all_zero_series_is_flat_and_degenerate() {
        let r = report(&[0.0; 6]);
        assert_eq!(r.cumulative_return, 0.0);
        assert_eq!(r.annual_return, 0.0);
        assert_eq!(r.annual_volatility, 0.0);
        assert_eq!(r.sharpe, MetricOutcome::Degenerate(DegenerateReason::ZeroVolatility));
        assert_eq!(r.stability, 1.0);
        assert_eq!(r.max_drawdown, 0.0);
        assert_eq!(r.daily_var, 0.0);
    }

    #[test]
    fn constant_nonzero_series_hits_the_volatility_floor() {
        // Rounding noise in the mean makes the naive std ~1e-17, not 0;
        // the floor must still classify this as zero dispersion.
        let r = report(&[0.1; 48]);
        assert_eq!(r.sharpe, MetricOutcome::Degenerate(DegenerateReason::ZeroVolatility));
    }

    #[test]
    fn hand_computed_suite_on_small_series() {
        let xs = [0.02, -0.01, 0.03, -0.02];
        let r = report(&xs);
        let n = 4.0;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((r.annual_volatility - std * 252f64.sqrt()).abs() < 1e-15);
        assert!((r.sharpe.value().unwrap() - mean / std * 252f64.sqrt()).abs() < 1e-12);
        let downside = ((0.01f64.powi(2) + 0.02f64.powi(2)) / n).sqrt();
        assert!((r.sortino.value().unwrap() - mean / downside * 252f64.sqrt()).abs() < 1e-12);
        assert!((r.omega.value().unwrap() - 0.05 / 0.03).abs() < 1e-12);
        // Equity dips 1.02·0.99·1.03·0.98 relative to its peak after day 3.
        let peak = 1.02 * 0.99 * 1.03;
        let trough = peak * 0.98;
        assert!((r.max_drawdown - (trough / peak - 1.0)).abs() < 1e-12);
        assert!((r.calmar.value().unwrap() - r.annual_return / (trough / peak - 1.0).abs()).abs() < 1e-12);
    }

    #[test]
    fn daily_var_interpolates_order_statistics() {
        let r = report(&[0.01, -0.05, 0.03, -0.02]);
        // Sorted: [-0.05, -0.02, 0.01, 0.03]; h = 3·0.05 = 0.15.
        let expect = -0.05 + 0.15 * (-0.02 - -0.05);
        assert!((r.daily_var - expect).abs() < 1e-15);
    }

    #[test]
    fn constant_growth_has_perfect_stability() {
        let r = report(&[0.01; 30]);
        assert!(r.stability > 1.0 - 1e-12);
        let mixed = report(&[0.05, -0.04, 0.03, -0.05, 0.06, -0.01]);
        assert!(mixed.stability < 1.0);
        assert!(mixed.stability >= 0.0);
    }

    #[test]
    fn omega_inverts_under_negation() {
        let xs = [0.02, -0.01, 0.03, -0.02, 0.005];
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let a = report(&xs).omega.value().unwrap();
        let b = report(&neg).omega.value().unwrap();
        assert!((a * b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_var_matches_hand_formula() {
        let xs = [0.02, -0.01, 0.03, -0.02];
        let mean = xs.iter().sum::<f64>() / 4.0;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        let got = gaussian_daily_var(&xs).unwrap();
        assert!((got - (mean + GAUSSIAN_VAR_Z * std)).abs() < 1e-15);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(
            compute_metrics(&[0.1], 252),
            Err(AnalyticsError::TooShort { .. })
        ));
        assert!(matches!(
            compute_metrics(&[0.1, -1.0], 252),
            Err(AnalyticsError::InvalidReturn { index: 1, .. })
        ));
        assert!(matches!(
            compute_metrics(&[0.1, f64::NAN], 252),
            Err(AnalyticsError::InvalidReturn { .. })
        ));
    }

    #[test]
    fn json_and_csv_forms_expose_degenerates() {
        let r = report(&[0.01, 0.02, 0.03]);
        let mut buf = Vec::new();
        write_metrics_json(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("{\n"));
        assert!(text.contains("\"sharpe\": "));
        assert!(text.contains("\"calmar\": null"));
        assert!(text.contains("\"degenerate\": [\"calmar\", \"omega\", \"sortino\"]"));
        let row = metrics_csv_row(&r);
        assert_eq!(row.matches(',').count(), metrics_csv_header().matches(',').count());
        assert!(row.ends_with("calmar;omega;sortino"));
    }

    #[test]
    fn min_variance_diagonal_is_inverse_variance() {
        let cov: [f64; 4] = [1.0, 0.0, 0.0, 4.0];
        let w = solve_min_variance(&cov, 2).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-6, "w = {w:?}");
        assert!((w[1] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn min_variance_identity_is_equal_weight() {
        let a = 4;
        let mut cov = vec![0.0f64; a * a];
        for i in 0..a {
            cov[i * a + i] = 1.0;
        }
        let w = solve_min_variance(&cov, a).unwrap();
        for wi in &w {
            assert!((wi - 0.25).abs() < 1e-8);
        }
    }

    #[test]
    fn min_variance_beats_equal_weights_on_random_returns() {
        use rand_chacha::rand_core::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut unit = move || rng.next_u64() as f64 / u64::MAX as f64 - 0.5;
        for _ in 0..10 {
            let rows: Vec<Vec<f64>> =
                (0..40).map(|_| (0..3).map(|_| 0.02 * unit()).collect()).collect();
            let w = min_variance_weights(&rows).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(w.iter().all(|x| *x >= 0.0));
            // Rebuild the covariance the solver minimized over.
            let a = 3;
            let t = rows.len() as f64;
            let mut means = [0.0; 3];
            for row in &rows {
                for (m, v) in means.iter_mut().zip(row) {
                    *m += v / t;
                }
            }
            let mut cov = vec![0.0; a * a];
            for row in &rows {
                for i in 0..a {
                    for j in 0..a {
                        cov[i * a + j] += (row[i] - means[i]) * (row[j] - means[j]) / (t - 1.0);
                    }
                }
            }
            for i in 0..a {
                cov[i * a + i] += 1e-8;
            }
            let equal = portfolio_variance(&cov, &equal_weights::<f64>(a));
            let solved = portfolio_variance(&cov, &w);
            assert!(solved <= equal + 1e-12);
        }
    }

    #[test]
    fn projection_lands_on_simplex_and_fixes_interior_points() {
        let w = project_simplex::<f64>(&[0.2, 0.3, 0.5]);
        for (a, b) in w.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = project_simplex::<f64>(&[1.0, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        let q = project_simplex(&[-3.0, 0.4, 5.0]);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(q.iter().all(|x| *x >= 0.0));
        assert_eq!(q[0], 0.0);
    }

    fn make_ds(closes: &[Vec<f64>], esg: &[f64]) -> AlignedDataset<f64> {
        let a = closes.len();
        let t = closes[0].len();
        let start = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
        let calendar: Vec<NaiveDate> =
            (0..t as i64).map(|i| start + chrono::Days::new(i as u64)).collect();
        let tickers: Vec<String> = (0..a).map(|i| format!("T{i:02}")).collect();
        let mut bars = Vec::new();
        let mut esg_rows = Vec::new();
        let mut observed = Vec::new();
        for (day, date) in calendar.iter().enumerate() {
            let mut row = Vec::new();
            let mut erow = Vec::new();
            for asset in 0..a {
                let c = closes[asset][day];
                row.push(OhlcvBar {
                    date: *date,
                    open: c,
                    high: c * 1.01,
                    low: c * 0.99,
                    close: c,
                    volume: 1000.0,
                });
                erow.push(EsgRecord::new(*date, esg[asset], esg[asset], esg[asset]).unwrap());
            }
            bars.push(row);
            esg_rows.push(erow);
            observed.push(vec![true; a]);
        }
        AlignedDataset::new(tickers, calendar, bars, esg_rows, observed).unwrap()
    }

    fn wiggly(start: f64, amp: f64, t: usize) -> Vec<f64> {
        (0..t).map(|i| start * (1.0 + amp * ((i as f64 * 0.9).sin()))).collect()
    }

    #[test]
    fn stratified_baseline_sits_on_the_index() {
        let t = 70;
        let ds = make_ds(
            &[wiggly(100.0, 0.05, t), wiggly(50.0, 0.08, t), wiggly(80.0, 0.03, t)],
            &[9.0, 5.0, 2.0],
        );
        let mut icfg = IndicatorConfig::default();
        icfg.sma_windows = vec![10, 20];
        icfg.macd_slow = 20;
        icfg.boll_window = 20;
        let panel = compute_features(&ds, &icfg).unwrap();
        let spec = BaselineSpec::new(BaselineKind::Stratified);
        let result = run_baseline(&ds, &panel, &spec, 0.0, EsgSource::Mean).unwrap();
        assert!(!result.is_empty());
        for (phi, psi) in result.phi.iter().zip(&result.psi) {
            assert_eq!(phi.to_bits(), psi.to_bits());
        }
        // Equal-weight daily return is the mean of asset returns.
        for (i, date_idx) in (panel.usable_start()..ds.n_days() - 1).enumerate() {
            let hand: f64 = (0..3)
                .map(|asset| {
                    ds.bar(date_idx + 1, asset).close / ds.bar(date_idx, asset).close - 1.0
                })
                .sum::<f64>()
                / 3.0;
            assert!((result.raw_returns[i] - hand).abs() < 1e-12);
        }
        // λ is pinned to 0, so the shaped series degenerates to raw.
        assert_eq!(result.raw_returns, result.regulated_returns);
    }

    #[test]
    fn min_variance_single_solve_replays_as_static_portfolio() {
        let t = 70;
        let ds = make_ds(&[wiggly(100.0, 0.05, t), wiggly(50.0, 0.02, t)], &[7.0, 4.0]);
        let mut icfg = IndicatorConfig::default();
        icfg.sma_windows = vec![10, 20];
        icfg.macd_slow = 20;
        icfg.boll_window = 20;
        let panel = compute_features(&ds, &icfg).unwrap();
        let mut spec = BaselineSpec::new(BaselineKind::MinVariance);
        spec.lookback = 15;
        spec.rebalance = 10_000; // never re-solve
        let result = run_baseline(&ds, &panel, &spec, 0.0, EsgSource::Mean).unwrap();
        let w = min_variance_weights(&trailing_returns(&ds, panel.usable_start(), 15)).unwrap();
        for (i, day) in (panel.usable_start()..ds.n_days() - 1).enumerate() {
            let hand: f64 = (0..2)
                .map(|asset| {
                    w[asset] * (ds.bar(day + 1, asset).close / ds.bar(day, asset).close - 1.0)
                })
                .sum();
            assert!((result.raw_returns[i] - hand).abs() < 1e-12, "day {day}");
        }
    }

    #[test]
    fn min_variance_requires_history() {
        let t = 30;
        let ds = make_ds(&[wiggly(100.0, 0.05, t), wiggly(50.0, 0.02, t)], &[7.0, 4.0]);
        let icfg = IndicatorConfig {
            macd_fast: 2,
            macd_slow: 3,
            macd_signal: 2,
            boll_window: 3,
            boll_k: 2.0,
            rsi_window: 2,
            cci_window: 3,
            dx_window: 2,
            sma_windows: vec![3],
        };
        let panel = compute_features(&ds, &icfg).unwrap();
        let spec = BaselineSpec::new(BaselineKind::MinVariance); // lookback 30 > usable_start 2
        assert!(matches!(
            run_baseline(&ds, &panel, &spec, 0.0, EsgSource::Mean),
            Err(AnalyticsError::InsufficientHistory { .. })
        ));
    }
}
