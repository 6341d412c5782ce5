//! Hand-rolled CSV ingestion. The two schemas are small and fixed, and the
//! loaders must report line numbers and reject malformed rows precisely;
//! a streaming parser would add nothing here.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use super::{AlignedDataset, DataError, EsgRecord, EsgTable, MarketTable, OhlcvBar};
use crate::scalar::Scalar;

pub const OHLCV_HEADER: &str = "date,ticker,open,high,low,close,volume";
pub const ESG_HEADER: &str = "date,ticker,e,s,g";

struct Lines<'a> {
    path: &'a Path,
    text: &'a str,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> DataError {
        DataError::Parse { path: self.path.to_path_buf(), line, message: message.into() }
    }

    /// Yields (1-based line number, trimmed line), skipping blank lines.
    fn rows(&self) -> impl Iterator<Item = (usize, &'a str)> {
        self.text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r').trim()))
            .filter(|(_, l)| !l.is_empty())
    }
}

fn read_file(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

fn parse_date(src: &Lines, line: usize, field: &str) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .map_err(|_| src.err(line, format!("bad date {field:?}, expected YYYY-MM-DD")))
}

fn parse_num<F: Scalar>(src: &Lines, line: usize, name: &str, field: &str) -> Result<F, DataError> {
    field
        .parse::<F>()
        .map_err(|_| src.err(line, format!("bad {name} value {field:?}")))
}

fn split_fields<'s>(
    src: &Lines,
    line: usize,
    row: &'s str,
    expected: usize,
) -> Result<Vec<&'s str>, DataError> {
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(src.err(line, format!("expected {expected} fields, got {}", fields.len())));
    }
    Ok(fields)
}

/// Applies an optional ticker filter to a parsed table, erroring on filter
/// entries that never appeared in the file.
fn apply_filter<T>(
    map: BTreeMap<String, T>,
    filter: Option<&[&str]>,
) -> Result<BTreeMap<String, T>, DataError> {
    let Some(wanted) = filter else { return Ok(map) };
    let unknown: Vec<String> = wanted
        .iter()
        .filter(|t| !map.contains_key(**t))
        .map(|t| t.to_string())
        .collect();
    if !unknown.is_empty() {
        return Err(DataError::UnknownTickers(unknown));
    }
    Ok(map.into_iter().filter(|(k, _)| wanted.contains(&k.as_str())).collect())
}

/// Sorts a ticker's rows by date; a repeated date is a data error, reported
/// against the ticker rather than a line (the offending lines may be far apart).
fn sort_checked<T>(
    ticker: &str,
    mut rows: Vec<(NaiveDate, T)>,
) -> Result<Vec<T>, DataError> {
    rows.sort_by_key(|(date, _)| *date);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(DataError::Invalid {
                ticker: ticker.to_string(),
                date: pair[0].0,
                message: "duplicate row for this date".into(),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

/// Loads an OHLCV CSV (`date,ticker,open,high,low,close,volume`). Rows may
/// arrive in any order; output series are sorted by date per ticker.
pub fn load_ohlcv<F: Scalar>(
    path: &Path,
    tickers: Option<&[&str]>,
) -> Result<MarketTable<F>, DataError> {
    let text = read_file(path)?;
    let src = Lines { path, text: &text };
    let mut rows = src.rows();
    match rows.next() {
        Some((line, header)) if header != OHLCV_HEADER => {
            return Err(src.err(line, format!("header must be {OHLCV_HEADER:?}, got {header:?}")))
        }
        None => return Err(DataError::Empty { path: path.to_path_buf() }),
        _ => {}
    }

    let mut grouped: BTreeMap<String, Vec<(NaiveDate, OhlcvBar<F>)>> = BTreeMap::new();
    for (line, row) in rows {
        let f = split_fields(&src, line, row, 7)?;
        let date = parse_date(&src, line, f[0])?;
        let ticker = f[1];
        if ticker.is_empty() {
            return Err(src.err(line, "empty ticker"));
        }
        let bar = OhlcvBar {
            date,
            open: parse_num(&src, line, "open", f[2])?,
            high: parse_num(&src, line, "high", f[3])?,
            low: parse_num(&src, line, "low", f[4])?,
            close: parse_num(&src, line, "close", f[5])?,
            volume: parse_num(&src, line, "volume", f[6])?,
        };
        bar.validate().map_err(|message| DataError::Invalid {
            ticker: ticker.to_string(),
            date,
            message,
        })?;
        grouped.entry(ticker.to_string()).or_default().push((date, bar));
    }
    if grouped.is_empty() {
        return Err(DataError::Empty { path: path.to_path_buf() });
    }

    let grouped = apply_filter(grouped, tickers)?;
    let mut series = BTreeMap::new();
    for (ticker, rows) in grouped {
        let sorted = sort_checked(&ticker, rows)?;
        series.insert(ticker, sorted);
    }
    MarketTable::new(series)
}

/// Loads an ESG CSV (`date,ticker,e,s,g`), scores on the [0, 10] scale.
pub fn load_esg<F: Scalar>(path: &Path) -> Result<EsgTable<F>, DataError> {
    let text = read_file(path)?;
    let src = Lines { path, text: &text };
    let mut rows = src.rows();
    match rows.next() {
        Some((line, header)) if header != ESG_HEADER => {
            return Err(src.err(line, format!("header must be {ESG_HEADER:?}, got {header:?}")))
        }
        None => return Err(DataError::Empty { path: path.to_path_buf() }),
        _ => {}
    }

    let mut grouped: BTreeMap<String, Vec<(NaiveDate, EsgRecord<F>)>> = BTreeMap::new();
    for (line, row) in rows {
        let f = split_fields(&src, line, row, 5)?;
        let date = parse_date(&src, line, f[0])?;
        let ticker = f[1];
        if ticker.is_empty() {
            return Err(src.err(line, "empty ticker"));
        }
        let e = parse_num(&src, line, "e", f[2])?;
        let s = parse_num(&src, line, "s", f[3])?;
        let g = parse_num(&src, line, "g", f[4])?;
        let record = EsgRecord::new(date, e, s, g).map_err(|message| DataError::Invalid {
            ticker: ticker.to_string(),
            date,
            message,
        })?;
        grouped.entry(ticker.to_string()).or_default().push((date, record));
    }
    if grouped.is_empty() {
        return Err(DataError::Empty { path: path.to_path_buf() });
    }

    let mut series = BTreeMap::new();
    for (ticker, rows) in grouped {
        let sorted = sort_checked(&ticker, rows)?;
        series.insert(ticker, sorted);
    }
    EsgTable::new(series)
}

/// Writes an aligned panel back out in the raw OHLCV schema, day-major.
pub fn write_ohlcv_csv<F: Scalar, W: Write>(
    ds: &AlignedDataset<F>,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "{OHLCV_HEADER}")?;
    for (day, date) in ds.calendar().iter().enumerate() {
        for (asset, ticker) in ds.tickers().iter().enumerate() {
            let b = ds.bar(day, asset);
            writeln!(
                out,
                "{date},{ticker},{},{},{},{},{}",
                b.open, b.high, b.low, b.close, b.volume
            )?;
        }
    }
    Ok(())
}

/// Writes the panel's daily ESG scores in the raw ESG schema. The output is
/// dense: one row per (day, ticker) regardless of which rows were observed.
pub fn write_esg_csv<F: Scalar, W: Write>(
    ds: &AlignedDataset<F>,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "{ESG_HEADER}")?;
    for (day, date) in ds.calendar().iter().enumerate() {
        for (asset, ticker) in ds.tickers().iter().enumerate() {
            let r = ds.esg(day, asset);
            writeln!(out, "{date},{ticker},{},{},{}", r.e, r.s, r.g)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn write_temp(name: &str, content: &str) -> PathBuf {
        let mut path = std::env::temp_dir();
        path.push(format!("esgrl-csv-{}-{name}", std::process::id()));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    const SMALL_OHLCV: &str = "\
date,ticker,open,high,low,close,volume
2020-01-02,AAA,10,11,9,10.5,1000
2020-01-03,AAA,10.5,12,10,11,1100
2020-01-06,AAA,11,11.5,10.5,11.2,900
2020-01-02,BBB,20,21,19,20.5,2000
2020-01-03,BBB,20.5,22,20,21,2100
2020-01-06,BBB,21,21.5,20.5,21.2,1900
";

    #[test]
    fn parses_two_tickers_three_days() {
        let path = write_temp("ok.csv", SMALL_OHLCV);
        let table = load_ohlcv::<f64>(&path, None).unwrap();
        assert_eq!(table.n_tickers(), 2);
        assert_eq!(table.n_bars(), 6);
        assert_eq!(table.series("AAA").unwrap()[1].close, 11.0);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn shuffled_rows_parse_identically() {
        let path = write_temp("sorted.csv", SMALL_OHLCV);
        let sorted = load_ohlcv::<f64>(&path, None).unwrap();
        let mut lines: Vec<&str> = SMALL_OHLCV.lines().skip(1).collect();
        lines.reverse();
        lines.swap(0, 3);
        let shuffled_text = format!("{OHLCV_HEADER}\n{}\n", lines.join("\n"));
        let path2 = write_temp("shuffled.csv", &shuffled_text);
        let shuffled = load_ohlcv::<f64>(&path2, None).unwrap();
        for ticker in ["AAA", "BBB"] {
            assert_eq!(sorted.series(ticker).unwrap(), shuffled.series(ticker).unwrap());
        }
        std::fs::remove_file(&path).ok();
        std::fs::remove_file(&path2).ok();
    }

    #[test]
    fn rejects_high_below_low() {
        let text = "date,ticker,open,high,low,close,volume\n2020-01-02,AAA,10,9,11,10,100\n";
        let path = write_temp("crossed.csv", text);
        match load_ohlcv::<f64>(&path, None) {
            Err(DataError::Invalid { ticker, message, .. }) => {
                assert_eq!(ticker, "AAA");
                assert!(message.contains("low"), "{message}");
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn reports_line_numbers_for_malformed_rows() {
        let text = "date,ticker,open,high,low,close,volume\n2020-01-02,AAA,10,11,9,10,100\nnot-a-date,AAA,1,1,1,1,1\n";
        let path = write_temp("badrow.csv", text);
        match load_ohlcv::<f64>(&path, None) {
            Err(DataError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("date"));
            }
            other => panic!("expected Parse, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rejects_duplicate_date_rows() {
        let text = "date,ticker,open,high,low,close,volume\n2020-01-02,AAA,10,11,9,10,100\n2020-01-02,AAA,10,11,9,10,100\n";
        let path = write_temp("dup.csv", text);
        assert!(matches!(load_ohlcv::<f64>(&path, None), Err(DataError::Invalid { .. })));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn filter_selects_and_rejects_unknown() {
        let path = write_temp("filter.csv", SMALL_OHLCV);
        let only_a = load_ohlcv::<f64>(&path, Some(&["AAA"])).unwrap();
        assert_eq!(only_a.n_tickers(), 1);
        match load_ohlcv::<f64>(&path, Some(&["AAA", "ZZZ"])) {
            Err(DataError::UnknownTickers(t)) => assert_eq!(t, vec!["ZZZ".to_string()]),
            other => panic!("expected UnknownTickers, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn esg_parse_mean_and_bounds() {
        let text = "date,ticker,e,s,g\n2020-01-02,AAA,6,7,8\n2020-02-03,AAA,5,5,5\n";
        let path = write_temp("esg.csv", text);
        let table = load_esg::<f64>(&path).unwrap();
        let recs = table.records("AAA").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].esg_mean(), 7.0);
        std::fs::remove_file(&path).ok();

        let bad = write_temp("esg-bad.csv", "date,ticker,e,s,g\n2020-01-02,AAA,11,5,5\n");
        assert!(matches!(load_esg::<f64>(&bad), Err(DataError::Invalid { .. })));
        std::fs::remove_file(&bad).ok();
    }

    #[test]
    fn empty_files_error() {
        let path = write_temp("empty.csv", "date,ticker,e,s,g\n");
        assert!(matches!(load_esg::<f64>(&path), Err(DataError::Empty { .. })));
        std::fs::remove_file(&path).ok();
        let path = write_temp("empty2.csv", "");
        assert!(matches!(load_ohlcv::<f64>(&path, None), Err(DataError::Empty { .. })));
        std::fs::remove_file(&path).ok();
    }
}
