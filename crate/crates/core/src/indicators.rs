//! Technical indicators over daily OHLCV series: MACD, Bollinger bands,
//! RSI, CCI, DX and simple moving averages, each with explicit warm-up
//! semantics (positions before `first_valid` hold no value, never zeros).

use std::io::Write;

use thiserror::Error;

use crate::marketdata::AlignedDataset;
use crate::scalar::{cast, Scalar};

/// Mean-deviation scale in the CCI denominator, fixed by convention.
pub const CCI_SCALE: f64 = 0.015;

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("series has {got} points but {need} are needed")]
    TooShort { need: usize, got: usize },
    #[error("series length mismatch: {0}")]
    LengthMismatch(String),
    #[error("bad indicator config: {0}")]
    BadConfig(String),
}

/// Window lengths for the feature set. `macd_signal` only affects
/// [`macd_with_signal`]; the feature panel carries the MACD line alone.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorConfig {
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub boll_window: usize,
    pub boll_k: f64,
    pub rsi_window: usize,
    pub cci_window: usize,
    pub dx_window: usize,
    pub sma_windows: Vec<usize>,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        IndicatorConfig {
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            boll_window: 20,
            boll_k: 2.0,
            rsi_window: 14,
            cci_window: 14,
            dx_window: 14,
            sma_windows: vec![30, 60],
        }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<(), IndicatorError> {
        let windows = [
            ("macd_fast", self.macd_fast),
            ("macd_slow", self.macd_slow),
            ("macd_signal", self.macd_signal),
            ("boll_window", self.boll_window),
            ("rsi_window", self.rsi_window),
            ("cci_window", self.cci_window),
            ("dx_window", self.dx_window),
        ];
        for (name, w) in windows {
            if w < 1 {
                return Err(IndicatorError::BadConfig(format!("{name} must be ≥ 1")));
            }
        }
        for w in &self.sma_windows {
            if *w < 1 {
                return Err(IndicatorError::BadConfig("sma windows must be ≥ 1".into()));
            }
        }
        if self.macd_fast >= self.macd_slow {
            return Err(IndicatorError::BadConfig(format!(
                "macd_fast {} must be smaller than macd_slow {}",
                self.macd_fast, self.macd_slow
            )));
        }
        if !self.boll_k.is_finite() || self.boll_k < 0.0 {
            return Err(IndicatorError::BadConfig(format!(
                "boll_k must be finite and ≥ 0, got {}",
                self.boll_k
            )));
        }
        Ok(())
    }

    /// Points needed before the first complete feature row exists:
    /// the largest per-indicator requirement (RSI and DX consume one extra
    /// point for the first price change).
    pub fn min_days(&self) -> usize {
        [
            self.macd_slow,
            self.boll_window,
            self.rsi_window + 1,
            self.cci_window,
            self.dx_window + 1,
            self.sma_windows.iter().copied().max().unwrap_or(0),
        ]
        .into_iter()
        .max()
        .unwrap()
    }

    /// First index (0-based) at which every feature is defined.
    pub fn usable_start(&self) -> usize {
        self.min_days() - 1
    }
}

/// A series aligned to its input, undefined before `first_valid`.
/// Warm-up slots hold NaN so accidental use surfaces immediately.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries<F> {
    values: Vec<F>,
    first_valid: usize,
}

impl<F: Scalar> IndicatorSeries<F> {
    fn with_warmup(len: usize, first_valid: usize) -> Self {
        IndicatorSeries { values: vec![F::nan(); len], first_valid }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first_valid(&self) -> usize {
        self.first_valid
    }

    pub fn get(&self, t: usize) -> Option<F> {
        (t >= self.first_valid).then(|| self.values.get(t).copied()).flatten()
    }

    /// The defined tail, from `first_valid` to the end.
    pub fn valid(&self) -> &[F] {
        &self.values[self.first_valid..]
    }
}

fn need(len: usize, n: usize) -> Result<(), IndicatorError> {
    if len < n {
        return Err(IndicatorError::TooShort { need: n, got: len });
    }
    Ok(())
}

fn window_mean<F: Scalar>(xs: &[F]) -> F {
    xs.iter().copied().sum::<F>() / cast(xs.len() as f64)
}

/// Arithmetic mean over each trailing `window`; defined from `window - 1`.
pub fn sma<F: Scalar>(closes: &[F], window: usize) -> Result<IndicatorSeries<F>, IndicatorError> {
    if window < 1 {
        return Err(IndicatorError::BadConfig("sma window must be ≥ 1".into()));
    }
    need(closes.len(), window)?;
    let mut out = IndicatorSeries::with_warmup(closes.len(), window - 1);
    for t in window - 1..closes.len() {
        out.values[t] = window_mean(&closes[t + 1 - window..=t]);
    }
    Ok(out)
}

/// Exponential moving average with multiplier `2/(n+1)`, seeded with the
/// SMA of the first `n` values; defined from `n - 1`.
fn ema<F: Scalar>(xs: &[F], n: usize) -> IndicatorSeries<F> {
    debug_assert!(n >= 1 && xs.len() >= n);
    let k: F = cast(2.0 / (n as f64 + 1.0));
    let mut out = IndicatorSeries::with_warmup(xs.len(), n - 1);
    let mut e = window_mean(&xs[..n]);
    out.values[n - 1] = e;
    for t in n..xs.len() {
        e = e + k * (xs[t] - e);
        out.values[t] = e;
    }
    out
}

/// MACD line: EMA(fast) − EMA(slow); defined from `slow - 1`.
pub fn macd<F: Scalar>(
    closes: &[F],
    fast: usize,
    slow: usize,
) -> Result<IndicatorSeries<F>, IndicatorError> {
    if fast < 1 || fast >= slow {
        return Err(IndicatorError::BadConfig(format!(
            "macd windows must satisfy 1 ≤ fast < slow, got ({fast}, {slow})"
        )));
    }
    need(closes.len(), slow)?;
    let ef = ema(closes, fast);
    let es = ema(closes, slow);
    let mut out = IndicatorSeries::with_warmup(closes.len(), slow - 1);
    for t in slow - 1..closes.len() {
        out.values[t] = ef.values[t] - es.values[t];
    }
    Ok(out)
}

/// MACD line plus its signal line (EMA of the MACD values over
/// `signal` points); the signal is defined from `slow + signal - 2`.
pub fn macd_with_signal<F: Scalar>(
    closes: &[F],
    fast: usize,
    slow: usize,
    signal: usize,
) -> Result<(IndicatorSeries<F>, IndicatorSeries<F>), IndicatorError> {
    if signal < 1 {
        return Err(IndicatorError::BadConfig("macd signal window must be ≥ 1".into()));
    }
    let line = macd(closes, fast, slow)?;
    need(closes.len(), slow + signal - 1)?;
    let sig_tail = ema(line.valid(), signal);
    let mut sig = IndicatorSeries::with_warmup(closes.len(), line.first_valid + signal - 1);
    for (i, v) in sig_tail.values.iter().enumerate().skip(signal - 1) {
        sig.values[line.first_valid + i] = *v;
    }
    Ok((line, sig))
}

/// Bollinger bands: SMA ± k·σ with population standard deviation.
pub fn bollinger<F: Scalar>(
    closes: &[F],
    window: usize,
    k: F,
) -> Result<(IndicatorSeries<F>, IndicatorSeries<F>), IndicatorError> {
    if window < 1 {
        return Err(IndicatorError::BadConfig("bollinger window must be ≥ 1".into()));
    }
    need(closes.len(), window)?;
    let mut upper = IndicatorSeries::with_warmup(closes.len(), window - 1);
    let mut lower = IndicatorSeries::with_warmup(closes.len(), window - 1);
    for t in window - 1..closes.len() {
        let xs = &closes[t + 1 - window..=t];
        let mean = window_mean(xs);
        let var = xs.iter().map(|x| (*x - mean) * (*x - mean)).sum::<F>() / cast(window as f64);
        let dev = k * var.sqrt();
        upper.values[t] = mean + dev;
        lower.values[t] = mean - dev;
    }
    Ok((upper, lower))
}

/// Wilder-smoothed RSI; defined from `window` (one point is consumed by the
/// first price change). A window with no losses reads 100, no gains reads 0;
/// a flat window therefore reads 100 (the no-losses rule is checked first).
pub fn rsi<F: Scalar>(closes: &[F], window: usize) -> Result<IndicatorSeries<F>, IndicatorError> {
    if window < 1 {
        return Err(IndicatorError::BadConfig("rsi window must be ≥ 1".into()));
    }
    need(closes.len(), window + 1)?;
    let n: F = cast(window as f64);
    let hundred: F = cast(100.0);
    let mut out = IndicatorSeries::with_warmup(closes.len(), window);

    let mut avg_gain = F::zero();
    let mut avg_loss = F::zero();
    for t in 1..=window {
        let d = closes[t] - closes[t - 1];
        avg_gain += d.max(F::zero());
        avg_loss += (-d).max(F::zero());
    }
    avg_gain /= n;
    avg_loss /= n;

    let value = |gain: F, loss: F| {
        if loss == F::zero() {
            hundred
        } else if gain == F::zero() {
            F::zero()
        } else {
            hundred - hundred / (F::one() + gain / loss)
        }
    };
    out.values[window] = value(avg_gain, avg_loss);
    for t in window + 1..closes.len() {
        let d = closes[t] - closes[t - 1];
        avg_gain = (avg_gain * (n - F::one()) + d.max(F::zero())) / n;
        avg_loss = (avg_loss * (n - F::one()) + (-d).max(F::zero())) / n;
        out.values[t] = value(avg_gain, avg_loss);
    }
    Ok(out)
}

/// Commodity channel index over the typical price (H+L+C)/3; a window with
/// zero mean deviation reads 0.
pub fn cci<F: Scalar>(
    high: &[F],
    low: &[F],
    close: &[F],
    window: usize,
) -> Result<IndicatorSeries<F>, IndicatorError> {
    if window < 1 {
        return Err(IndicatorError::BadConfig("cci window must be ≥ 1".into()));
    }
    if high.len() != low.len() || high.len() != close.len() {
        return Err(IndicatorError::LengthMismatch(format!(
            "high {}, low {}, close {}",
            high.len(),
            low.len(),
            close.len()
        )));
    }
    need(close.len(), window)?;
    let third: F = cast(3.0);
    let tp: Vec<F> = (0..close.len()).map(|t| (high[t] + low[t] + close[t]) / third).collect();
    let scale: F = cast(CCI_SCALE);
    let mut out = IndicatorSeries::with_warmup(close.len(), window - 1);
    for t in window - 1..tp.len() {
        let xs = &tp[t + 1 - window..=t];
        let mean = window_mean(xs);
        let md = xs.iter().map(|x| (*x - mean).abs()).sum::<F>() / cast(window as f64);
        out.values[t] = if md == F::zero() { F::zero() } else { (tp[t] - mean) / (scale * md) };
    }
    Ok(out)
}

/// Directional movement index from Wilder-smoothed ±DM and TR; defined from
/// `window`. Both DIs zero (for instance on a constant series) reads 0.
pub fn dx<F: Scalar>(
    high: &[F],
    low: &[F],
    close: &[F],
    window: usize,
) -> Result<IndicatorSeries<F>, IndicatorError> {
    if window < 1 {
        return Err(IndicatorError::BadConfig("dx window must be ≥ 1".into()));
    }
    if high.len() != low.len() || high.len() != close.len() {
        return Err(IndicatorError::LengthMismatch(format!(
            "high {}, low {}, close {}",
            high.len(),
            low.len(),
            close.len()
        )));
    }
    need(close.len(), window + 1)?;
    let n: F = cast(window as f64);
    let hundred: F = cast(100.0);

    let len = close.len();
    let mut plus_dm = vec![F::zero(); len];
    let mut minus_dm = vec![F::zero(); len];
    let mut tr = vec![F::zero(); len];
    for t in 1..len {
        let up = high[t] - high[t - 1];
        let down = low[t - 1] - low[t];
        if up > down && up > F::zero() {
            plus_dm[t] = up;
        }
        if down > up && down > F::zero() {
            minus_dm[t] = down;
        }
        tr[t] = (high[t] - low[t])
            .max((high[t] - close[t - 1]).abs())
            .max((low[t] - close[t - 1]).abs());
    }

    let mut s_plus = plus_dm[1..=window].iter().copied().sum::<F>() / n;
    let mut s_minus = minus_dm[1..=window].iter().copied().sum::<F>() / n;
    let mut s_tr = tr[1..=window].iter().copied().sum::<F>() / n;

    let dx_at = |s_plus: F, s_minus: F, s_tr: F| {
        if s_tr == F::zero() {
            return F::zero();
        }
        let plus_di = hundred * s_plus / s_tr;
        let minus_di = hundred * s_minus / s_tr;
        let denom = plus_di + minus_di;
        if denom == F::zero() {
            F::zero()
        } else {
            // |p − m| ≤ p + m, but multiply-then-divide can overshoot 100
            // by an ulp when one DI is nearly zero.
            (hundred * (plus_di - minus_di).abs() / denom).min(hundred)
        }
    };

    let mut out = IndicatorSeries::with_warmup(len, window);
    out.values[window] = dx_at(s_plus, s_minus, s_tr);
    for t in window + 1..len {
        s_plus = (s_plus * (n - F::one()) + plus_dm[t]) / n;
        s_minus = (s_minus * (n - F::one()) + minus_dm[t]) / n;
        s_tr = (s_tr * (n - F::one()) + tr[t]) / n;
        out.values[t] = dx_at(s_plus, s_minus, s_tr);
    }
    Ok(out)
}

/// Per-day, per-asset feature rows. Rows before `usable_start` exist but
/// hold NaN; consumers must start at `usable_start`.
#[derive(Debug, Clone)]
pub struct FeaturePanel<F> {
    feature_names: Vec<String>,
    usable_start: usize,
    n_assets: usize,
    rows: Vec<Vec<F>>,
}

impl<F: Scalar> FeaturePanel<F> {
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Features per asset.
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn n_days(&self) -> usize {
        self.rows.len()
    }

    pub fn usable_start(&self) -> usize {
        self.usable_start
    }

    /// The feature slice of one asset on one day.
    pub fn features(&self, day: usize, asset: usize) -> &[F] {
        debug_assert!(day >= self.usable_start, "feature row {day} is inside warm-up");
        let w = self.n_features();
        &self.rows[day][asset * w..(asset + 1) * w]
    }
}

/// Computes the full feature panel. The dataset must cover at least
/// `cfg.min_days()` days; earlier rows are reported as warm-up via
/// [`FeaturePanel::usable_start`].
pub fn compute_features<F: Scalar>(
    ds: &AlignedDataset<F>,
    cfg: &IndicatorConfig,
) -> Result<FeaturePanel<F>, IndicatorError> {
    cfg.validate()?;
    let t = ds.n_days();
    need(t, cfg.min_days())?;

    let mut feature_names =
        vec!["macd".to_string(), "boll_upper".into(), "boll_lower".into(), "rsi".into(), "cci".into(), "dx".into()];
    for w in &cfg.sma_windows {
        feature_names.push(format!("sma_{w}"));
    }

    let a = ds.n_assets();
    let width = feature_names.len();
    let usable_start = cfg.usable_start();
    let mut rows = vec![vec![F::nan(); a * width]; t];

    for asset in 0..a {
        let highs: Vec<F> = (0..t).map(|d| ds.bar(d, asset).high).collect();
        let lows: Vec<F> = (0..t).map(|d| ds.bar(d, asset).low).collect();
        let closes: Vec<F> = (0..t).map(|d| ds.bar(d, asset).close).collect();

        let macd_s = macd(&closes, cfg.macd_fast, cfg.macd_slow)?;
        let (boll_up, boll_lo) = bollinger(&closes, cfg.boll_window, cast(cfg.boll_k))?;
        let rsi_s = rsi(&closes, cfg.rsi_window)?;
        let cci_s = cci(&highs, &lows, &closes, cfg.cci_window)?;
        let dx_s = dx(&highs, &lows, &closes, cfg.dx_window)?;
        let smas: Vec<IndicatorSeries<F>> = cfg
            .sma_windows
            .iter()
            .map(|w| sma(&closes, *w))
            .collect::<Result<_, _>>()?;

        for day in usable_start..t {
            let row = &mut rows[day][asset * width..(asset + 1) * width];
            row[0] = macd_s.values[day];
            row[1] = boll_up.values[day];
            row[2] = boll_lo.values[day];
            row[3] = rsi_s.values[day];
            row[4] = cci_s.values[day];
            row[5] = dx_s.values[day];
            for (j, s) in smas.iter().enumerate() {
                row[6 + j] = s.values[day];
            }
        }
    }

    Ok(FeaturePanel { feature_names, usable_start, n_assets: a, rows })
}

/// Writes the usable feature rows as `date,ticker,<feature...>`.
pub fn write_features_csv<F: Scalar, W: Write>(
    ds: &AlignedDataset<F>,
    panel: &FeaturePanel<F>,
    out: &mut W,
) -> std::io::Result<()> {
    write!(out, "date,ticker")?;
    for name in panel.feature_names() {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for day in panel.usable_start()..panel.n_days() {
        for (asset, ticker) in ds.tickers().iter().enumerate() {
            write!(out, "{},{ticker}", ds.calendar()[day])?;
            for v in panel.features(day, asset) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn sma_hand_values() {
        let s = sma(&[1.0, 2.0, 3.0, 4.0, 5.0], 3).unwrap();
        assert_eq!(s.first_valid(), 2);
        assert!(s.get(1).is_none());
        assert_eq!(s.valid(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn sma_window_one_is_identity() {
        let xs = [3.5, 1.0, 7.25];
        let s = sma(&xs, 1).unwrap();
        assert_eq!(s.valid(), &xs);
    }

    #[test]
    fn sma_rejects_long_window() {
        assert!(matches!(sma(&[1.0, 2.0], 3), Err(IndicatorError::TooShort { need: 3, got: 2 })));
    }

    #[test]
    fn macd_constant_series_is_zero() {
        let xs = vec![42.0f64; 40];
        let m = macd(&xs, 12, 26).unwrap();
        assert_eq!(m.first_valid(), 25);
        assert!(m.valid().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn macd_matches_hand_unrolled_recurrence() {
        // fast = 2 (k = 2/3), slow = 3 (k = 1/2), six points.
        let xs = [1.0, 2.0, 4.0, 3.0, 5.0, 6.0];
        let mut ef = (1.0 + 2.0) / 2.0; // seeded at index 1
        ef += 2.0 / 3.0 * (4.0 - ef); // index 2
        let mut es = (1.0 + 2.0 + 4.0) / 3.0; // seeded at index 2
        let mut expect = vec![ef - es];
        for x in &xs[3..] {
            ef += 2.0 / 3.0 * (x - ef);
            es += 1.0 / 2.0 * (x - es);
            expect.push(ef - es);
        }
        let m = macd(&xs, 2, 3).unwrap();
        assert_eq!(m.first_valid(), 2);
        for (got, want) in m.valid().iter().zip(&expect) {
            approx(*got, *want, 1e-12);
        }
    }

    #[test]
    fn macd_linear_ramp_converges() {
        // On x_t = t the EMA lag settles to (n-1)/2, so the MACD line tends
        // to (slow - fast)/2.
        let xs: Vec<f64> = (0..400).map(|t| t as f64).collect();
        let m = macd(&xs, 12, 26).unwrap();
        approx(*m.valid().last().unwrap(), (26.0 - 12.0) / 2.0, 1e-6);
    }

    #[test]
    fn macd_signal_line_warmup() {
        let xs: Vec<f64> = (0..40).map(|t| (t as f64 * 0.7).sin() + 10.0).collect();
        let (line, sig) = macd_with_signal(&xs, 12, 26, 9).unwrap();
        assert_eq!(line.first_valid(), 25);
        assert_eq!(sig.first_valid(), 33);
        // Seed of the signal EMA is the SMA of the first 9 MACD values.
        let seed: f64 = line.valid()[..9].iter().sum::<f64>() / 9.0;
        approx(sig.get(33).unwrap(), seed, 1e-12);
    }

    #[test]
    fn bollinger_hand_values() {
        let (up, lo) = bollinger(&[1.0, 2.0, 3.0], 3, 2.0).unwrap();
        let sigma = (2.0f64 / 3.0).sqrt();
        approx(up.get(2).unwrap(), 2.0 + 2.0 * sigma, 1e-12);
        approx(lo.get(2).unwrap(), 2.0 - 2.0 * sigma, 1e-12);
    }

    #[test]
    fn bollinger_degenerate_cases() {
        let (up, lo) = bollinger(&[5.0; 10], 4, 2.0).unwrap();
        assert!(up.valid().iter().all(|v| *v == 5.0));
        assert!(lo.valid().iter().all(|v| *v == 5.0));
        let xs = [1.0, 4.0, 2.0, 8.0];
        let (up, lo) = bollinger(&xs, 2, 0.0).unwrap();
        let mid = sma(&xs, 2).unwrap();
        assert_eq!(up.valid(), mid.valid());
        assert_eq!(lo.valid(), mid.valid());
    }

    #[test]
    fn rsi_one_sided_series() {
        let inc: Vec<f64> = (0..20).map(|t| 10.0 + t as f64).collect();
        assert!(rsi(&inc, 14).unwrap().valid().iter().all(|v| *v == 100.0));
        let dec: Vec<f64> = (0..20).map(|t| 100.0 - t as f64).collect();
        assert!(rsi(&dec, 14).unwrap().valid().iter().all(|v| *v == 0.0));
        let flat = vec![7.0; 20];
        assert!(rsi(&flat, 14).unwrap().valid().iter().all(|v| *v == 100.0));
    }

    #[test]
    fn rsi_matches_wilder_recurrence_on_mixed_series() {
        let xs = [44.0, 44.3, 44.1, 43.6, 44.3, 44.8, 45.1, 45.4, 45.8, 46.1, 45.9, 46.3, 46.1, 46.0, 46.4];
        let got = rsi(&xs, 14).unwrap();
        // Direct recurrence, written out rather than shared with the impl.
        let mut gain = 0.0;
        let mut loss = 0.0;
        for t in 1..=14 {
            let d: f64 = xs[t] - xs[t - 1];
            if d > 0.0 {
                gain += d;
            } else {
                loss += -d;
            }
        }
        gain /= 14.0;
        loss /= 14.0;
        let want = 100.0 - 100.0 / (1.0 + gain / loss);
        approx(got.get(14).unwrap(), want, 1e-12);
        assert_eq!(got.first_valid(), 14);
    }

    #[test]
    fn cci_flat_window_reads_zero() {
        let h = vec![5.0; 20];
        assert!(cci(&h, &h, &h, 14).unwrap().valid().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cci_hand_value_on_spike() {
        // Typical prices [5,5,5,5,8]: SMA 5.6, mean deviation 0.96.
        let c = [5.0, 5.0, 5.0, 5.0, 8.0];
        let got = cci(&c, &c, &c, 5).unwrap();
        approx(got.get(4).unwrap(), 2.4 / (0.015 * 0.96), 1e-12);
    }

    #[test]
    fn cci_sign_flips_with_mirrored_deviations() {
        let c = [5.0, 5.2, 4.9, 5.1, 5.3];
        let mirrored: Vec<f64> = c.iter().map(|x| 10.0 - x).collect();
        let a = cci(&c, &c, &c, 5).unwrap();
        let b = cci(&mirrored, &mirrored, &mirrored, 5).unwrap();
        approx(a.get(4).unwrap(), -b.get(4).unwrap(), 1e-9);
    }

    #[test]
    fn dx_one_sided_and_flat() {
        // Up-gapping series: every +DM > 0, every −DM = 0.
        let h: Vec<f64> = (0..20).map(|t| 10.0 + 2.0 * t as f64).collect();
        let l: Vec<f64> = h.iter().map(|x| x - 1.0).collect();
        let d = dx(&h, &l, &h, 14).unwrap();
        assert!(d.valid().iter().all(|v| *v == 100.0), "{:?}", d.valid());

        let flat = vec![5.0; 20];
        let d = dx(&flat, &flat, &flat, 14).unwrap();
        assert!(d.valid().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rsi_dx_need_one_extra_point() {
        let xs = vec![1.0; 14];
        assert!(matches!(rsi(&xs, 14), Err(IndicatorError::TooShort { need: 15, .. })));
        assert!(matches!(dx(&xs, &xs, &xs, 14), Err(IndicatorError::TooShort { need: 15, .. })));
    }

    #[test]
    fn default_warmup_is_sixty_days() {
        let cfg = IndicatorConfig::default();
        assert_eq!(cfg.min_days(), 60);
        assert_eq!(cfg.usable_start(), 59);
        // The max comes from the longest SMA; dropping it exposes the
        // rsi/dx "+1" requirement.
        let cfg = IndicatorConfig { sma_windows: vec![5], macd_slow: 10, macd_fast: 3, boll_window: 5, ..cfg };
        assert_eq!(cfg.min_days(), 15);
    }

    #[test]
    fn config_rejects_fast_not_below_slow() {
        let cfg = IndicatorConfig { macd_fast: 26, ..IndicatorConfig::default() };
        assert!(matches!(cfg.validate(), Err(IndicatorError::BadConfig(_))));
    }
}
