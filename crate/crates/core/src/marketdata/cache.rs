//! Columnar text cache for aligned datasets.
//!
//! Layout (`esgrl-dataset v1`):
//!
//! ```text
//! esgrl-dataset v1
//! tickers AAA BBB
//! date,ticker,open,high,low,close,volume,e,s,g,esg_observed
//! 2020-01-02,AAA,10,11,9,10.5,1000,6,7,8,1
//! ...
//! ```
//!
//! Rows are day-major, tickers in panel order within each day. Floats are
//! printed with shortest-round-trip formatting, so save → load → save is
//! byte-identical.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use super::{AlignedDataset, DataError, EsgRecord, OhlcvBar};
use crate::scalar::Scalar;

const VERSION_LINE: &str = "esgrl-dataset v1";
const BODY_HEADER: &str = "date,ticker,open,high,low,close,volume,e,s,g,esg_observed";

pub fn save_dataset<F: Scalar, W: Write>(
    ds: &AlignedDataset<F>,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "{VERSION_LINE}")?;
    writeln!(out, "tickers {}", ds.tickers().join(" "))?;
    writeln!(out, "{BODY_HEADER}")?;
    for (day, date) in ds.calendar().iter().enumerate() {
        for (asset, ticker) in ds.tickers().iter().enumerate() {
            let b = ds.bar(day, asset);
            let r = ds.esg(day, asset);
            writeln!(
                out,
                "{date},{ticker},{},{},{},{},{},{},{},{},{}",
                b.open,
                b.high,
                b.low,
                b.close,
                b.volume,
                r.e,
                r.s,
                r.g,
                u8::from(ds.esg_observed(day, asset)),
            )?;
        }
    }
    Ok(())
}

pub fn load_dataset<F: Scalar>(path: &Path) -> Result<AlignedDataset<F>, DataError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    parse_dataset(&text, path)
}

/// Parses the cache text; `path` is used only for error context.
pub fn parse_dataset<F: Scalar>(text: &str, path: &Path) -> Result<AlignedDataset<F>, DataError> {
    let err = |line: usize, message: String| DataError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    match lines.next() {
        Some((_, l)) if l == VERSION_LINE => {}
        Some((n, l)) => return Err(err(n, format!("expected {VERSION_LINE:?}, got {l:?}"))),
        None => return Err(DataError::Empty { path: path.to_path_buf() }),
    }
    let tickers: Vec<String> = match lines.next() {
        Some((_, l)) if l.starts_with("tickers ") => {
            l["tickers ".len()..].split_whitespace().map(str::to_owned).collect()
        }
        Some((n, l)) => return Err(err(n, format!("expected tickers line, got {l:?}"))),
        None => return Err(err(2, "missing tickers line".into())),
    };
    if tickers.is_empty() {
        return Err(err(2, "tickers line names no tickers".into()));
    }
    match lines.next() {
        Some((_, l)) if l == BODY_HEADER => {}
        Some((n, l)) => return Err(err(n, format!("expected {BODY_HEADER:?}, got {l:?}"))),
        None => return Err(err(3, "missing body header".into())),
    }

    let a = tickers.len();
    let mut calendar: Vec<NaiveDate> = Vec::new();
    let mut bars: Vec<Vec<OhlcvBar<F>>> = Vec::new();
    let mut esg: Vec<Vec<EsgRecord<F>>> = Vec::new();
    let mut observed: Vec<Vec<bool>> = Vec::new();

    for (n, l) in lines {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 11 {
            return Err(err(n, format!("expected 11 fields, got {}", f.len())));
        }
        let date = NaiveDate::parse_from_str(f[0], "%Y-%m-%d")
            .map_err(|_| err(n, format!("bad date {:?}", f[0])))?;
        let slot = bars.last().map_or(a, Vec::len);
        let (day_new, asset) = if slot == a { (true, 0) } else { (false, slot) };
        if day_new {
            if calendar.last().is_some_and(|prev| *prev >= date) {
                return Err(err(n, format!("days out of order at {date}")));
            }
            calendar.push(date);
            bars.push(Vec::with_capacity(a));
            esg.push(Vec::with_capacity(a));
            observed.push(Vec::with_capacity(a));
        } else if *calendar.last().unwrap() != date {
            return Err(err(n, format!("expected {} more rows for {}", a - slot, calendar.last().unwrap())));
        }
        if f[1] != tickers[asset] {
            return Err(err(n, format!("expected ticker {:?}, got {:?}", tickers[asset], f[1])));
        }
        let num = |name: &str, field: &str| -> Result<F, DataError> {
            field.parse::<F>().map_err(|_| err(n, format!("bad {name} value {field:?}")))
        };
        let bar = OhlcvBar {
            date,
            open: num("open", f[2])?,
            high: num("high", f[3])?,
            low: num("low", f[4])?,
            close: num("close", f[5])?,
            volume: num("volume", f[6])?,
        };
        let record = EsgRecord::new(date, num("e", f[7])?, num("s", f[8])?, num("g", f[9])?)
            .map_err(|m| err(n, m))?;
        let seen = match f[10] {
            "1" => true,
            "0" => false,
            other => return Err(err(n, format!("bad esg_observed flag {other:?}"))),
        };
        bars.last_mut().unwrap().push(bar);
        esg.last_mut().unwrap().push(record);
        observed.last_mut().unwrap().push(seen);
    }
    if bars.last().is_some_and(|row| row.len() != a) {
        return Err(DataError::Shape("cache ends mid-day".into()));
    }
    AlignedDataset::new(tickers, calendar, bars, esg, observed)
}

#[cfg(test)]
mod tests {
    use super::super::{synth_market, SynthAsset, SynthSpec};
    use super::*;

    fn sample() -> AlignedDataset<f64> {
        let spec = SynthSpec::new(vec![
            SynthAsset::new("AAA", 50.0, 0.0005, 0.01, [6.0, 7.0, 8.0]),
            SynthAsset::new("BBB", 90.0, -0.0002, 0.02, [3.0, 4.0, 5.0]),
        ]);
        synth_market(&spec, 70, 11).unwrap()
    }

    #[test]
    fn round_trips_exactly() {
        let ds = sample();
        let mut buf = Vec::new();
        save_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let back: AlignedDataset<f64> = parse_dataset(&text, Path::new("mem")).unwrap();
        assert_eq!(ds, back);
        let mut buf2 = Vec::new();
        save_dataset(&back, &mut buf2).unwrap();
        assert_eq!(buf, buf2, "save → load → save must be byte-identical");
    }

    #[test]
    fn rejects_wrong_version() {
        let text = "esgrl-dataset v9\ntickers AAA\n";
        assert!(matches!(
            parse_dataset::<f64>(text, Path::new("mem")),
            Err(DataError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_truncated_day() {
        let ds = sample();
        let mut buf = Vec::new();
        save_dataset(&ds, &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        // Drop the final row, leaving the last day with one ticker only.
        text.truncate(text.trim_end().rfind('\n').unwrap() + 1);
        assert!(parse_dataset::<f64>(&text, Path::new("mem")).is_err());
    }
}
