//! Drives the `esgrl` binary end to end: synth → validate → run → report →
//! metrics, checking exit codes, artifact layout, and byte determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn esgrl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esgrl"))
        .args(args)
        .current_dir(cwd)
        .env("ESGRL_LOG", "warn")
        .output()
        .expect("spawn esgrl")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const SYNTH_SPEC: &str = r#"
days = 200
seed = 17

[[assets]]
ticker = "UP"
start_price = 100.0
drift = 0.002
volatility = 0.01
esg = [9.0, 8.0, 7.0]

[[assets]]
ticker = "DN"
start_price = 80.0
drift = -0.002
volatility = 0.01
esg = [2.0, 2.0, 2.0]
"#;

fn experiment_config(out_dir: &str) -> String {
    format!(
        r#"
[data]
ohlcv = "market.csv"
esg = "market.esg.csv"

[split]
train_end = "2018-06-01"
trade_end = "2018-10-05"

[agent]
algorithm = "a2c"
total_timesteps = 512
rollout_length = 8
hidden = [16]

[experiment]
seeds = [5]
out_dir = "{out_dir}"

[[grid]]
regulate = true
esg_in_state = true

[[baselines]]
kind = "min_variance"
lookback = 20
rebalance = 10
"#
    )
}

#[test]
fn full_cli_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // synth: OHLCV at --out, ESG scores at the .esg.csv sibling.
    fs::write(dir.join("spec.toml"), SYNTH_SPEC).unwrap();
    let out = esgrl(&["synth", "spec.toml", "--out", "market.csv"], dir);
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
    let market = fs::read_to_string(dir.join("market.csv")).unwrap();
    assert!(market.starts_with("date,ticker,open,high,low,close,volume\n"));
    let esg = fs::read_to_string(dir.join("market.esg.csv")).unwrap();
    assert!(esg.starts_with("date,ticker,e,s,g\n"));

    // validate accepts the config and reports its shape.
    fs::write(dir.join("exp.toml"), experiment_config("out")).unwrap();
    let out = esgrl(&["validate", "exp.toml"], dir);
    assert_eq!(code(&out), 0, "validate failed: {}", stderr(&out));
    assert!(stdout(&out).contains("config OK"), "{}", stdout(&out));

    // unknown keys and semantic errors exit 1 before anything runs.
    fs::write(dir.join("typo.toml"), experiment_config("out").replace("[agent]", "[agent]\nbogus = 1")).unwrap();
    let out = esgrl(&["validate", "typo.toml"], dir);
    assert_eq!(code(&out), 1, "unknown key must exit 1: {}", stderr(&out));
    assert!(stderr(&out).contains("bogus"), "{}", stderr(&out));

    fs::write(
        dir.join("bad.toml"),
        experiment_config("out").replace("seeds = [5]", "seeds = []"),
    )
    .unwrap();
    let out = esgrl(&["validate", "bad.toml"], dir);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("seeds"), "{}", stderr(&out));

    // run writes the full artifact tree.
    let out = esgrl(&["run", "exp.toml"], dir);
    assert_eq!(code(&out), 0, "run failed: {}", stderr(&out));
    assert!(stdout(&out).contains("a2c_regulated_esg"), "{}", stdout(&out));
    let run_dir = dir.join("out/runs/a2c_regulated_esg/seed_5");
    for file in ["trace.csv", "weights.csv", "equity.csv", "metrics.json", "train_log.csv", "actor.ckpt", "critic.ckpt", "policy.meta"] {
        assert!(run_dir.join(file).exists(), "missing {file}");
    }
    for file in ["manifest.json", "summary.csv", "summary.json", "summary.txt", "comparison.svg"] {
        assert!(dir.join("out").join(file).exists(), "missing out/{file}");
    }
    for kind in ["min_variance", "stratified"] {
        assert!(dir.join(format!("out/baselines/{kind}/metrics.json")).exists(), "missing baseline {kind}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["version"], "esgrl-manifest v1");
    assert_eq!(manifest["runs"][0]["ok"], true);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["dataset_fingerprint"].as_str().unwrap().len(), 64);

    // a second run of the same config is byte-identical.
    let out = esgrl(&["run", "exp.toml", "--out", "out2"], dir);
    assert_eq!(code(&out), 0, "second run failed: {}", stderr(&out));
    for file in ["summary.csv", "summary.json", "summary.txt", "comparison.svg"] {
        let a = fs::read(dir.join("out").join(file)).unwrap();
        let b = fs::read(dir.join("out2").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }

    // report rebuilds the summary files from the artifacts alone.
    let before = fs::read(dir.join("out/summary.csv")).unwrap();
    fs::remove_file(dir.join("out/summary.csv")).unwrap();
    fs::remove_file(dir.join("out/comparison.svg")).unwrap();
    let out = esgrl(&["report", "out"], dir);
    assert_eq!(code(&out), 0, "report failed: {}", stderr(&out));
    let after = fs::read(dir.join("out/summary.csv")).unwrap();
    assert_eq!(before, after, "report must reproduce summary.csv from artifacts");
    assert!(dir.join("out/comparison.svg").exists());

    // metrics scores a return series and prints the canonical JSON.
    fs::write(dir.join("returns.csv"), "return\n0.01\n-0.02\n0.015\n0.003\n").unwrap();
    let out = esgrl(&["metrics", "returns.csv"], dir);
    assert_eq!(code(&out), 0, "metrics failed: {}", stderr(&out));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(parsed["sharpe"].is_number(), "{}", stdout(&out));
    assert!(parsed["max_drawdown"].is_number());

    // empty return files are a validation failure, missing files a runtime one.
    fs::write(dir.join("empty.csv"), "return\n").unwrap();
    let out = esgrl(&["metrics", "empty.csv"], dir);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let out = esgrl(&["metrics", "nonexistent.csv"], dir);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn cli_surface_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = esgrl(&["--help"], dir);
    assert_eq!(code(&out), 0);
    for sub in ["validate", "run", "report", "synth", "metrics"] {
        assert!(stdout(&out).contains(sub), "help lacks {sub}: {}", stdout(&out));
    }

    let out = esgrl(&["--version"], dir);
    assert_eq!(code(&out), 0);

    // bad invocations are validation failures.
    let out = esgrl(&[], dir);
    assert_eq!(code(&out), 1);
    let out = esgrl(&["frobnicate"], dir);
    assert_eq!(code(&out), 1);

    // config parse failure (not TOML at all) is a validation failure.
    std::fs::write(dir.join("junk.toml"), "][ not toml").unwrap();
    let out = esgrl(&["validate", "junk.toml"], dir);
    assert_eq!(code(&out), 1);

    // missing config file is a runtime failure.
    let out = esgrl(&["validate", "missing.toml"], dir);
    assert_eq!(code(&out), 2);

    // report on a directory without a manifest is a runtime failure.
    let out = esgrl(&["report", "."], dir);
    assert_eq!(code(&out), 2);
}
