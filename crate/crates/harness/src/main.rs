//! `esgrl`: validate configs, run experiment grids, rebuild reports, generate
//! synthetic markets, and score return series from the command line.
//!
//! Exit codes: 0 on success, 1 on validation failure (bad flags or bad
//! config), 2 on runtime failure. Logging is controlled by `ESGRL_LOG`.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use esgrl_core::analytics::{compute_metrics, write_metrics_json, TRADING_DAYS_PER_YEAR};
use esgrl_core::marketdata::{write_esg_csv, write_ohlcv_csv, synth_market};
use esgrl_core::Real;
use esgrl::config::parse_synth_spec;
use esgrl::report::{report_from_dir, summary_text};
use esgrl::runner::{dataset_fingerprint, run_experiment};
use esgrl::{load_config, HarnessError};

#[derive(Parser)]
#[command(name = "esgrl", version, about = "ESG-regulated portfolio RL experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a config without running anything.
    Validate { config: PathBuf },
    /// Run the full experiment grid described by a config.
    Run {
        config: PathBuf,
        /// Worker threads for (cell, seed) runs; overrides the config.
        #[arg(long)]
        parallel: Option<usize>,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild summary tables and plots from an existing run directory.
    Report { run_dir: PathBuf },
    /// Generate a synthetic market from a spec file. Writes OHLCV to the
    /// given path and ESG scores next to it as `<stem>.esg.csv`.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the metric suite for a return series CSV and print it as JSON.
    Metrics {
        returns: PathBuf,
        /// Compounding periods per year.
        #[arg(long, default_value_t = TRADING_DAYS_PER_YEAR)]
        periods: usize,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("ESGRL_LOG", "warn"),
    )
    .init();

    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!(
                "config OK: {} cells × {} seeds, algorithm {}, out_dir {}",
                cfg.grid.len(),
                cfg.seeds.len(),
                cfg.agent.algorithm.as_str(),
                cfg.out_dir.display()
            );
            Ok(())
        }
        Command::Run { config, parallel, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(p) = parallel {
                if p == 0 {
                    return Err(HarnessError::Validation(vec![
                        "--parallel must be ≥ 1".into()
                    ]));
                }
                cfg.parallel = p;
            }
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            let outcome = run_experiment(&cfg)?;
            let summary = esgrl::aggregate::from_runs(&outcome.runs, &outcome.baselines);
            print!("{}", summary_text(&summary));
            println!("artifacts in {}", outcome.out_dir.display());
            let failed: Vec<String> = outcome
                .manifest
                .runs
                .iter()
                .filter(|r| !r.ok)
                .map(|r| format!("{} seed {}", r.cell, r.seed))
                .collect();
            if !failed.is_empty() {
                return Err(HarnessError::Report(format!(
                    "{} of {} runs failed: {}",
                    failed.len(),
                    outcome.manifest.runs.len(),
                    failed.join(", ")
                )));
            }
            Ok(())
        }
        Command::Report { run_dir } => {
            let table = report_from_dir(&run_dir)?;
            print!("{}", summary_text(&table));
            println!("report rewritten in {}", run_dir.display());
            Ok(())
        }
        Command::Synth { spec, out } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| HarnessError::Io { path: spec.clone(), source: e })?;
            let (synth_spec, days, seed) = parse_synth_spec(&text)?;
            let ds = synth_market::<Real>(&synth_spec, days, seed)?;

            let mut ohlcv = Vec::new();
            write_ohlcv_csv(&ds, &mut ohlcv).expect("in-memory write");
            std::fs::write(&out, &ohlcv)
                .map_err(|e| HarnessError::Io { path: out.clone(), source: e })?;

            let esg_path = sibling_esg_path(&out);
            let mut esg = Vec::new();
            write_esg_csv(&ds, &mut esg).expect("in-memory write");
            std::fs::write(&esg_path, &esg)
                .map_err(|e| HarnessError::Io { path: esg_path.clone(), source: e })?;

            println!(
                "wrote {} days × {} tickers to {} and {} (fingerprint {})",
                ds.n_days(),
                ds.n_assets(),
                out.display(),
                esg_path.display(),
                dataset_fingerprint(&ds)
            );
            Ok(())
        }
        Command::Metrics { returns, periods } => {
            let text = std::fs::read_to_string(&returns)
                .map_err(|e| HarnessError::Io { path: returns.clone(), source: e })?;
            let series = parse_returns(&text)
                .map_err(|msg| HarnessError::Validation(vec![format!("{}: {msg}", returns.display())]))?;
            let report = compute_metrics(&series, periods)?;
            let mut buf = Vec::new();
            write_metrics_json(&report, &mut buf).expect("in-memory write");
            print!("{}", String::from_utf8(buf).expect("JSON is UTF-8"));
            Ok(())
        }
    }
}

/// `data.csv` → `data.esg.csv` next to it.
fn sibling_esg_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.esg.csv"))
}

/// Accepts one return per line, optionally with a header row and extra
/// columns. A header column named `return` (or, failing that, `raw_return`)
/// selects the series, so run artifacts like `trace.csv` can be fed back in
/// directly; otherwise the value is the last CSV field.
fn parse_returns(text: &str) -> Result<Vec<Real>, String> {
    let mut out = Vec::new();
    let mut column: Option<usize> = None;
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let is_first = first;
        if first {
            first = false;
            let names: Vec<String> =
                line.split(',').map(|f| f.trim().to_ascii_lowercase()).collect();
            column = ["return", "raw_return"]
                .into_iter()
                .find_map(|name| names.iter().position(|h| h.as_str() == name));
        }
        let field = match column {
            Some(idx) => line.split(',').nth(idx),
            None => line.rsplit(',').next(),
        }
        .map(str::trim)
        .ok_or_else(|| {
            format!("line {}: expected at least {} fields", i + 1, column.unwrap_or(0) + 1)
        })?;
        match field.parse::<Real>() {
            Ok(v) => out.push(v),
            Err(e) if is_first => {
                log::debug!("skipping header row {line:?} ({e})");
            }
            Err(e) => return Err(format!("line {}: {field:?} is not a number ({e})", i + 1)),
        }
    }
    if out.is_empty() {
        return Err("no return values found".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn returns_parser_handles_headers_dates_and_rejects_garbage() {
        assert_eq!(parse_returns("0.01\n-0.02\n").unwrap(), vec![0.01, -0.02]);
        assert_eq!(parse_returns("return\n0.01\n").unwrap(), vec![0.01]);
        assert_eq!(
            parse_returns("date,return\n2020-01-02,0.01\n2020-01-03,0.03\n").unwrap(),
            vec![0.01, 0.03]
        );
        assert!(parse_returns("0.01\noops\n").is_err());
        assert!(parse_returns("return\n").is_err());
    }

    #[test]
    fn returns_parser_picks_the_return_column_out_of_a_trace() {
        let trace = "day,date,raw_return,regulated_return,value\n\
                     0,2020-01-02,0.01,0.02,1.01\n\
                     1,2020-01-03,-0.005,0.01,1.004\n";
        assert_eq!(parse_returns(trace).unwrap(), vec![0.01, -0.005]);
        assert!(parse_returns("date,return\n2020-01-02,0.01\nshort_row\n").is_err());
    }

    #[test]
    fn esg_sibling_sits_next_to_the_ohlcv_file() {
        assert_eq!(sibling_esg_path(Path::new("/tmp/m.csv")), Path::new("/tmp/m.esg.csv"));
        assert_eq!(sibling_esg_path(Path::new("plain")), Path::new("plain.esg.csv"));
    }
}
