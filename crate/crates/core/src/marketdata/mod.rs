//! Market and ESG data ingestion: CSV loading, calendar alignment with
//! nearest-date ESG fill, train/trade splitting, synthetic data generation,
//! and a versioned dataset cache.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

use crate::scalar::{cast, Scalar};

mod cache;
mod csv;
mod synth;

pub use cache::{load_dataset, parse_dataset, save_dataset};
pub use csv::{load_esg, load_ohlcv, write_esg_csv, write_ohlcv_csv};
pub use synth::{synth_market, SynthAsset, SynthSpec, MIN_SYNTH_DAYS};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
    #[error("{ticker} {date}: {message}")]
    Invalid {
        ticker: String,
        date: NaiveDate,
        message: String,
    },
    #[error("tickers not present in file: {0:?}")]
    UnknownTickers(Vec<String>),
    #[error("tickers without any ESG record: {0:?}")]
    MissingEsg(Vec<String>),
    #[error("no common trading days across tickers")]
    EmptyIntersection,
    #[error("bad split: {0}")]
    BadSplit(String),
    #[error("synthetic market needs at least {min} days to cover indicator warm-up, got {got}")]
    TooFewDays { min: usize, got: usize },
    #[error("synthetic spec: {0}")]
    Synth(String),
    #[error("dataset shape: {0}")]
    Shape(String),
}

/// One daily price bar. Prices are positive; `low ≤ open,close ≤ high`.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcvBar<F> {
    pub date: NaiveDate,
    pub open: F,
    pub high: F,
    pub low: F,
    pub close: F,
    pub volume: F,
}

impl<F: Scalar> OhlcvBar<F> {
    /// Checks the bar invariants, returning a human-readable violation.
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !v.is_finite() || v <= F::zero() {
                return Err(format!("{name} must be a positive finite price, got {v}"));
            }
        }
        if !self.volume.is_finite() || self.volume < F::zero() {
            return Err(format!("volume must be non-negative, got {}", self.volume));
        }
        if self.low > self.high {
            return Err(format!("low {} exceeds high {}", self.low, self.high));
        }
        if self.open < self.low || self.open > self.high {
            return Err(format!("open {} outside [low, high]", self.open));
        }
        if self.close < self.low || self.close > self.high {
            return Err(format!("close {} outside [low, high]", self.close));
        }
        Ok(())
    }
}

/// Which ESG field feeds the portfolio ESG value φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EsgSource {
    #[default]
    Mean,
    E,
    S,
    G,
}

impl EsgSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EsgSource::Mean => "mean",
            EsgSource::E => "e",
            EsgSource::S => "s",
            EsgSource::G => "g",
        }
    }
}

impl std::str::FromStr for EsgSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(EsgSource::Mean),
            "e" => Ok(EsgSource::E),
            "s" => Ok(EsgSource::S),
            "g" => Ok(EsgSource::G),
            other => Err(format!("unknown ESG source {other:?}, expected mean|e|s|g")),
        }
    }
}

/// One ESG scoring of a ticker. Scores live on the fixed [0, 10] scale; the
/// mean is computed at construction so it can never drift from the parts.
#[derive(Debug, Clone, PartialEq)]
pub struct EsgRecord<F> {
    pub date: NaiveDate,
    pub e: F,
    pub s: F,
    pub g: F,
    esg_mean: F,
}

impl<F: Scalar> EsgRecord<F> {
    pub fn new(date: NaiveDate, e: F, s: F, g: F) -> Result<Self, String> {
        for (name, v) in [("e", e), ("s", s), ("g", g)] {
            if !v.is_finite() || v < F::zero() || v > cast(10.0) {
                return Err(format!("{name} score must lie in [0, 10], got {v}"));
            }
        }
        let esg_mean = (e + s + g) / cast(3.0);
        Ok(EsgRecord { date, e, s, g, esg_mean })
    }

    pub fn esg_mean(&self) -> F {
        self.esg_mean
    }

    pub fn score(&self, source: EsgSource) -> F {
        match source {
            EsgSource::Mean => self.esg_mean,
            EsgSource::E => self.e,
            EsgSource::S => self.s,
            EsgSource::G => self.g,
        }
    }
}

/// Raw per-ticker OHLCV series, sorted by date, duplicate-free.
#[derive(Debug, Clone)]
pub struct MarketTable<F> {
    series: BTreeMap<String, Vec<OhlcvBar<F>>>,
}

impl<F: Scalar> MarketTable<F> {
    /// Validates sortedness, uniqueness, and bar invariants per ticker.
    pub fn new(series: BTreeMap<String, Vec<OhlcvBar<F>>>) -> Result<Self, DataError> {
        for (ticker, bars) in &series {
            for bar in bars {
                bar.validate().map_err(|message| DataError::Invalid {
                    ticker: ticker.clone(),
                    date: bar.date,
                    message,
                })?;
            }
            for pair in bars.windows(2) {
                if pair[0].date >= pair[1].date {
                    return Err(DataError::Invalid {
                        ticker: ticker.clone(),
                        date: pair[1].date,
                        message: "rows out of order or duplicated".into(),
                    });
                }
            }
        }
        Ok(MarketTable { series })
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn series(&self, ticker: &str) -> Option<&[OhlcvBar<F>]> {
        self.series.get(ticker).map(Vec::as_slice)
    }

    pub fn n_tickers(&self) -> usize {
        self.series.len()
    }

    pub fn n_bars(&self) -> usize {
        self.series.values().map(Vec::len).sum()
    }
}

/// Raw per-ticker ESG records, sparse in time, sorted by date.
#[derive(Debug, Clone)]
pub struct EsgTable<F> {
    series: BTreeMap<String, Vec<EsgRecord<F>>>,
}

impl<F: Scalar> EsgTable<F> {
    pub fn new(series: BTreeMap<String, Vec<EsgRecord<F>>>) -> Result<Self, DataError> {
        for (ticker, records) in &series {
            for pair in records.windows(2) {
                if pair[0].date >= pair[1].date {
                    return Err(DataError::Invalid {
                        ticker: ticker.clone(),
                        date: pair[1].date,
                        message: "ESG rows out of order or duplicated".into(),
                    });
                }
            }
        }
        Ok(EsgTable { series })
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn records(&self, ticker: &str) -> Option<&[EsgRecord<F>]> {
        self.series.get(ticker).map(Vec::as_slice)
    }
}

/// Dense (day × asset) panel of bars and ESG records on one shared calendar.
///
/// `esg[day][asset]` is dated to the calendar day it covers; its scores come
/// verbatim from the nearest observed record, with `esg_observed` recording
/// whether that record fell on the day itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset<F> {
    tickers: Vec<String>,
    calendar: Vec<NaiveDate>,
    bars: Vec<Vec<OhlcvBar<F>>>,
    esg: Vec<Vec<EsgRecord<F>>>,
    esg_observed: Vec<Vec<bool>>,
}

impl<F: Scalar> AlignedDataset<F> {
    pub fn new(
        tickers: Vec<String>,
        calendar: Vec<NaiveDate>,
        bars: Vec<Vec<OhlcvBar<F>>>,
        esg: Vec<Vec<EsgRecord<F>>>,
        esg_observed: Vec<Vec<bool>>,
    ) -> Result<Self, DataError> {
        if tickers.is_empty() {
            return Err(DataError::Shape("no tickers".into()));
        }
        if calendar.is_empty() {
            return Err(DataError::Shape("empty calendar".into()));
        }
        for pair in tickers.windows(2) {
            if pair[0] >= pair[1] {
                return Err(DataError::Shape(format!(
                    "tickers must be sorted and unique, found {:?} before {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        for pair in calendar.windows(2) {
            if pair[0] >= pair[1] {
                return Err(DataError::Shape(format!(
                    "calendar must be strictly increasing, found {} before {}",
                    pair[0], pair[1]
                )));
            }
        }
        let (t, a) = (calendar.len(), tickers.len());
        if bars.len() != t || esg.len() != t || esg_observed.len() != t {
            return Err(DataError::Shape("row count does not match calendar".into()));
        }
        for (day, date) in calendar.iter().enumerate() {
            if bars[day].len() != a || esg[day].len() != a || esg_observed[day].len() != a {
                return Err(DataError::Shape(format!("day {date} has wrong asset count")));
            }
            for (asset, bar) in bars[day].iter().enumerate() {
                if bar.date != *date {
                    return Err(DataError::Shape(format!(
                        "bar for {} dated {} placed on calendar day {date}",
                        tickers[asset], bar.date
                    )));
                }
                bar.validate().map_err(|message| DataError::Invalid {
                    ticker: tickers[asset].clone(),
                    date: bar.date,
                    message,
                })?;
                if esg[day][asset].date != *date {
                    return Err(DataError::Shape(format!(
                        "ESG row for {} dated {} placed on calendar day {date}",
                        tickers[asset], esg[day][asset].date
                    )));
                }
            }
        }
        Ok(AlignedDataset { tickers, calendar, bars, esg, esg_observed })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.calendar.len()
    }

    #[inline]
    pub fn bar(&self, day: usize, asset: usize) -> &OhlcvBar<F> {
        &self.bars[day][asset]
    }

    #[inline]
    pub fn esg(&self, day: usize, asset: usize) -> &EsgRecord<F> {
        &self.esg[day][asset]
    }

    pub fn esg_observed(&self, day: usize, asset: usize) -> bool {
        self.esg_observed[day][asset]
    }

    pub fn closes(&self, day: usize) -> impl Iterator<Item = F> + '_ {
        self.bars[day].iter().map(|b| b.close)
    }

    pub fn esg_scores(&self, day: usize, source: EsgSource) -> impl Iterator<Item = F> + '_ {
        self.esg[day].iter().map(move |r| r.score(source))
    }

    /// Clones the panel restricted to calendar positions `[lo, hi)`.
    fn restrict(&self, lo: usize, hi: usize) -> Self {
        AlignedDataset {
            tickers: self.tickers.clone(),
            calendar: self.calendar[lo..hi].to_vec(),
            bars: self.bars[lo..hi].to_vec(),
            esg: self.esg[lo..hi].to_vec(),
            esg_observed: self.esg_observed[lo..hi].to_vec(),
        }
    }

    /// Splits into a train panel covering days `≤ train_end` and a trade
    /// panel covering `(train_end, trade_end]`. Both sides must be non-empty
    /// and both boundaries must fall inside the calendar span.
    pub fn split(
        &self,
        train_end: NaiveDate,
        trade_end: NaiveDate,
    ) -> Result<(Self, Self), DataError> {
        if train_end >= trade_end {
            return Err(DataError::BadSplit(format!(
                "train_end {train_end} must precede trade_end {trade_end}"
            )));
        }
        let (first, last) = (self.calendar[0], *self.calendar.last().unwrap());
        for (name, d) in [("train_end", train_end), ("trade_end", trade_end)] {
            if d < first || d > last {
                return Err(DataError::BadSplit(format!(
                    "{name} {d} outside calendar span [{first}, {last}]"
                )));
            }
        }
        let i = self.calendar.partition_point(|d| *d <= train_end);
        let j = self.calendar.partition_point(|d| *d <= trade_end);
        if i == 0 {
            return Err(DataError::BadSplit(format!("no trading days on or before {train_end}")));
        }
        if j == i {
            return Err(DataError::BadSplit(format!(
                "no trading days in ({train_end}, {trade_end}]"
            )));
        }
        Ok((self.restrict(0, i), self.restrict(i, j)))
    }
}

/// Picks the record nearest in date to `day` (tie broken toward the earlier
/// record, avoiding lookahead). Returns the record and whether it falls
/// exactly on `day`. `records` must be non-empty and sorted.
fn nearest_record<'a, F: Scalar>(
    records: &'a [EsgRecord<F>],
    day: NaiveDate,
) -> (&'a EsgRecord<F>, bool) {
    let idx = records.partition_point(|r| r.date <= day);
    let prev = idx.checked_sub(1).map(|i| &records[i]);
    let next = records.get(idx);
    match (prev, next) {
        (Some(p), Some(n)) => {
            let d_prev = (day - p.date).num_days();
            let d_next = (n.date - day).num_days();
            if d_prev <= d_next {
                (p, d_prev == 0)
            } else {
                (n, false)
            }
        }
        (Some(p), None) => (p, p.date == day),
        (None, Some(n)) => (n, false),
        (None, None) => unreachable!("empty ESG record list is rejected before filling"),
    }
}

/// Aligns all tickers onto the intersection of their trading days and fills
/// each day's ESG scores from the nearest dated record per ticker.
pub fn align_and_fill<F: Scalar>(
    market: &MarketTable<F>,
    esg: &EsgTable<F>,
) -> Result<AlignedDataset<F>, DataError> {
    let tickers: Vec<String> = market.tickers().map(str::to_owned).collect();
    if tickers.is_empty() {
        return Err(DataError::Shape("market table has no tickers".into()));
    }

    let missing: Vec<String> = tickers
        .iter()
        .filter(|t| esg.records(t).map_or(true, |r| r.is_empty()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(DataError::MissingEsg(missing));
    }

    let mut calendar: Vec<NaiveDate> = market
        .series(&tickers[0])
        .expect("ticker list comes from the table")
        .iter()
        .map(|b| b.date)
        .collect();
    for ticker in &tickers[1..] {
        let dates: std::collections::BTreeSet<NaiveDate> =
            market.series(ticker).unwrap().iter().map(|b| b.date).collect();
        calendar.retain(|d| dates.contains(d));
    }
    if calendar.is_empty() {
        return Err(DataError::EmptyIntersection);
    }

    let a = tickers.len();
    let t = calendar.len();
    let mut bars: Vec<Vec<OhlcvBar<F>>> = vec![Vec::with_capacity(a); t];
    for ticker in &tickers {
        let series = market.series(ticker).unwrap();
        let mut cursor = 0;
        for (day, date) in calendar.iter().enumerate() {
            while series[cursor].date < *date {
                cursor += 1;
            }
            debug_assert_eq!(series[cursor].date, *date);
            bars[day].push(series[cursor].clone());
        }
    }

    let mut esg_rows: Vec<Vec<EsgRecord<F>>> = vec![Vec::with_capacity(a); t];
    let mut observed: Vec<Vec<bool>> = vec![Vec::with_capacity(a); t];
    for ticker in &tickers {
        let records = esg.records(ticker).unwrap();
        for (day, date) in calendar.iter().enumerate() {
            let (rec, seen) = nearest_record(records, *date);
            let filled =
                EsgRecord::new(*date, rec.e, rec.s, rec.g).map_err(|message| DataError::Invalid {
                    ticker: ticker.clone(),
                    date: *date,
                    message,
                })?;
            esg_rows[day].push(filled);
            observed[day].push(seen);
        }
    }

    AlignedDataset::new(tickers, calendar, bars, esg_rows, observed)
}
