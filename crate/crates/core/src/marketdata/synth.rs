//! Deterministic synthetic market generation: geometric random-walk closes
//! with a shared market factor, OHLC dressed consistently around the walk,
//! and constant or scheduled ESG scores.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AlignedDataset, DataError, EsgRecord, OhlcvBar};
use crate::scalar::{cast, Scalar};

/// Smallest generatable panel: the default indicator warm-up (60 days)
/// plus one day, so at least two usable observations survive warm-up.
/// `indicators::IndicatorConfig::default()` pins the 60 in a test.
pub const MIN_SYNTH_DAYS: usize = 61;

#[derive(Debug, Clone)]
pub struct SynthAsset {
    pub ticker: String,
    pub start_price: f64,
    /// Per-day log drift of the close.
    pub drift: f64,
    /// Per-day idiosyncratic log volatility, ≥ 0.
    pub volatility: f64,
    /// Constant [e, s, g] scores on the [0, 10] scale.
    pub esg: [f64; 3],
    /// Scheduled score changes as (from day index, [e, s, g]); the latest
    /// entry at or before each day wins. Empty means constant scores.
    pub esg_changes: Vec<(usize, [f64; 3])>,
}

impl SynthAsset {
    pub fn new(ticker: &str, start_price: f64, drift: f64, volatility: f64, esg: [f64; 3]) -> Self {
        SynthAsset {
            ticker: ticker.to_string(),
            start_price,
            drift,
            volatility,
            esg,
            esg_changes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub assets: Vec<SynthAsset>,
    /// Per-day log volatility of the market factor shared by every asset.
    pub common_volatility: f64,
    /// First calendar date; the generated calendar walks weekdays from here.
    pub start_date: NaiveDate,
    /// Volume scale; daily volumes land in [0.5, 1.5] × this.
    pub base_volume: f64,
}

impl SynthSpec {
    pub fn new(assets: Vec<SynthAsset>) -> Self {
        SynthSpec {
            assets,
            common_volatility: 0.0,
            start_date: NaiveDate::from_ymd_opt(2018, 1, 2).unwrap(),
            base_volume: 1e6,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.assets.is_empty() {
            return Err(DataError::Synth("no assets".into()));
        }
        if !self.common_volatility.is_finite() || self.common_volatility < 0.0 {
            return Err(DataError::Synth(format!(
                "common_volatility must be finite and ≥ 0, got {}",
                self.common_volatility
            )));
        }
        if !self.base_volume.is_finite() || self.base_volume <= 0.0 {
            return Err(DataError::Synth(format!("base_volume must be positive, got {}", self.base_volume)));
        }
        let mut names: Vec<&str> = self.assets.iter().map(|a| a.ticker.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.assets.len() {
            return Err(DataError::Synth("duplicate tickers".into()));
        }
        for a in &self.assets {
            if a.ticker.is_empty() || a.ticker.contains(',') || a.ticker.contains(char::is_whitespace) {
                return Err(DataError::Synth(format!("bad ticker {:?}", a.ticker)));
            }
            if !a.start_price.is_finite() || a.start_price <= 0.0 {
                return Err(DataError::Synth(format!("{}: start_price must be positive", a.ticker)));
            }
            if !a.drift.is_finite() {
                return Err(DataError::Synth(format!("{}: drift must be finite", a.ticker)));
            }
            if !a.volatility.is_finite() || a.volatility < 0.0 {
                return Err(DataError::Synth(format!("{}: volatility must be finite and ≥ 0", a.ticker)));
            }
            for scores in std::iter::once(&a.esg).chain(a.esg_changes.iter().map(|(_, s)| s)) {
                if scores.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 10.0) {
                    return Err(DataError::Synth(format!("{}: ESG scores must lie in [0, 10]", a.ticker)));
                }
            }
            for pair in a.esg_changes.windows(2) {
                if pair[0].0 >= pair[1].0 {
                    return Err(DataError::Synth(format!("{}: esg_changes days must increase", a.ticker)));
                }
            }
        }
        Ok(())
    }
}

fn weekday_calendar(start: NaiveDate, days: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(days);
    let mut d = start;
    while out.len() < days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("calendar overflow");
    }
    out
}

fn scores_for(asset: &SynthAsset, day: usize) -> [f64; 3] {
    asset
        .esg_changes
        .iter()
        .take_while(|(from, _)| *from <= day)
        .last()
        .map(|(_, s)| *s)
        .unwrap_or(asset.esg)
}

/// Generates an aligned panel of `days` weekdays. Identical (spec, days,
/// seed) triples produce bit-identical datasets: all randomness flows from
/// one ChaCha8 stream in a fixed draw order (per day: one market shock, then
/// per asset in ticker order: idiosyncratic shock, range factor, volume).
pub fn synth_market<F: Scalar>(
    spec: &SynthSpec,
    days: usize,
    seed: u64,
) -> Result<AlignedDataset<F>, DataError> {
    spec.validate()?;
    if days < MIN_SYNTH_DAYS {
        return Err(DataError::TooFewDays { min: MIN_SYNTH_DAYS, got: days });
    }

    let mut assets: Vec<&SynthAsset> = spec.assets.iter().collect();
    assets.sort_by(|x, y| x.ticker.cmp(&y.ticker));
    let calendar = weekday_calendar(spec.start_date, days);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let a = assets.len();
    let mut closes = vec![0.0f64; a];
    let mut bars: Vec<Vec<OhlcvBar<F>>> = Vec::with_capacity(days);
    let mut esg: Vec<Vec<EsgRecord<F>>> = Vec::with_capacity(days);
    let mut observed: Vec<Vec<bool>> = Vec::with_capacity(days);

    for (day, date) in calendar.iter().enumerate() {
        let z_common: f64 = rng.sample(StandardNormal);
        let mut bar_row = Vec::with_capacity(a);
        let mut esg_row = Vec::with_capacity(a);
        for (i, asset) in assets.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let u_range: f64 = rng.gen();
            let u_vol: f64 = rng.gen();

            let (open, close) = if day == 0 {
                (asset.start_price, asset.start_price)
            } else {
                let prev = closes[i];
                let step = asset.drift + spec.common_volatility * z_common + asset.volatility * z;
                (prev, prev * step.exp())
            };
            closes[i] = close;

            let range = (asset.volatility + spec.common_volatility) * u_range;
            let high = open.max(close) * (1.0 + range);
            let low = open.min(close) / (1.0 + range);
            let volume = (spec.base_volume * (0.5 + u_vol)).round();

            let bar = OhlcvBar {
                date: *date,
                open: cast(open),
                high: cast(high),
                low: cast(low),
                close: cast(close),
                volume: cast(volume),
            };
            debug_assert!(bar.validate().is_ok());
            bar_row.push(bar);

            let s = scores_for(asset, day);
            let record = EsgRecord::new(*date, cast(s[0]), cast(s[1]), cast(s[2]))
                .expect("validated scores");
            esg_row.push(record);
        }
        bars.push(bar_row);
        esg.push(esg_row);
        observed.push(vec![true; a]);
    }

    let tickers = assets.iter().map(|x| x.ticker.clone()).collect();
    AlignedDataset::new(tickers, calendar, bars, esg, observed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_volatility_zero_drift_is_constant() {
        let spec = SynthSpec::new(vec![SynthAsset::new("AAA", 50.0, 0.0, 0.0, [5.0, 5.0, 5.0])]);
        let ds = synth_market::<f64>(&spec, 70, 3).unwrap();
        for day in 0..ds.n_days() {
            let b = ds.bar(day, 0);
            assert_eq!(b.open, 50.0);
            assert_eq!(b.high, 50.0);
            assert_eq!(b.low, 50.0);
            assert_eq!(b.close, 50.0);
        }
    }

    #[test]
    fn same_seed_is_identical() {
        let spec = SynthSpec::new(vec![
            SynthAsset::new("AAA", 50.0, 0.001, 0.02, [5.0, 5.0, 5.0]),
            SynthAsset::new("BBB", 80.0, -0.001, 0.01, [7.0, 7.0, 7.0]),
        ]);
        let a = synth_market::<f64>(&spec, 80, 42).unwrap();
        let b = synth_market::<f64>(&spec, 80, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_market::<f64>(&spec, 80, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_days_is_rejected() {
        let spec = SynthSpec::new(vec![SynthAsset::new("AAA", 50.0, 0.0, 0.0, [5.0; 3])]);
        assert!(matches!(
            synth_market::<f64>(&spec, MIN_SYNTH_DAYS - 1, 0),
            Err(DataError::TooFewDays { .. })
        ));
    }

    #[test]
    fn calendar_skips_weekends() {
        let spec = SynthSpec::new(vec![SynthAsset::new("AAA", 50.0, 0.0, 0.0, [5.0; 3])]);
        let ds = synth_market::<f64>(&spec, 70, 0).unwrap();
        for d in ds.calendar() {
            assert!(!matches!(d.weekday(), Weekday::Sat | Weekday::Sun));
        }
    }

    #[test]
    fn esg_schedule_switches_on_the_given_day() {
        let mut asset = SynthAsset::new("AAA", 50.0, 0.0, 0.0, [2.0, 2.0, 2.0]);
        asset.esg_changes = vec![(65, [9.0, 9.0, 9.0])];
        let spec = SynthSpec::new(vec![asset]);
        let ds = synth_market::<f64>(&spec, 70, 0).unwrap();
        assert_eq!(ds.esg(64, 0).e, 2.0);
        assert_eq!(ds.esg(65, 0).e, 9.0);
        assert_eq!(ds.esg(69, 0).e, 9.0);
    }

    #[test]
    fn terminal_price_matches_lognormal_mean_over_seeds() {
        // log p_T/p_0 ~ N(T·mu, T·sigma^2), so E[p_T] = p0·exp(T·mu + T·sigma^2/2).
        let (mu, sigma, t) = (0.001, 0.005, 252);
        let spec = SynthSpec::new(vec![SynthAsset::new("AAA", 100.0, mu, sigma, [5.0; 3])]);
        let n = 1000;
        let mut sum = 0.0;
        for seed in 0..n {
            let ds = synth_market::<f64>(&spec, t, seed).unwrap();
            sum += ds.bar(t - 1, 0).close;
        }
        let mc_mean = sum / n as f64;
        let tf = (t - 1) as f64; // day 0 is the fixed start price; t-1 steps follow
        let analytic = 100.0 * (tf * mu + tf * sigma * sigma / 2.0).exp();
        let per_sample_sd = analytic * ((tf * sigma * sigma).exp() - 1.0).sqrt();
        let band = 4.0 * per_sample_sd / (n as f64).sqrt();
        assert!(
            (mc_mean - analytic).abs() < band,
            "MC mean {mc_mean} vs analytic {analytic} ± {band}"
        );
    }
}
