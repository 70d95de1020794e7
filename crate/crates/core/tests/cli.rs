use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ehrelay::cli::SWEEP_COLUMNS;
use ehrelay::codec::trace::read_trace;
use serde_json::Value;
use tempfile::TempDir;

const REFERENCE: &str = r#"{
  "channel": {"battery_capacity": 1, "energy_cost": 1, "crossover": 0},
  "policy": [[0.5, 0, 0.5, 0], [0.25, 0.25, 0.25, 0.25]]
}"#;

const REVEALING: &str = r#"{
  "channel": {"battery_capacity": 1, "energy_cost": 1},
  "policy": [[0, 0, 1, 0], [0.475, 0.05, 0.475, 0]],
  "plan": {"n": 2000, "blocks": 5, "epsilon": 0.02, "rate_fraction": 0.5},
  "trials": 50,
  "base_seed": 3
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ehrelay"));
    c.env_remove(ehrelay::cli::OUT_DIR_ENV);
    c
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is valid JSON")
}

/// Parses as CSV with a uniform record width; returns header and rows.
fn csv_of(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let rows: Vec<Vec<String>> = r
        .records()
        .map(|rec| rec.expect("well-formed CSV record").iter().map(String::from).collect())
        .collect();
    assert!(rows.iter().all(|row| row.len() == header.len()));
    (header, rows)
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

#[test]
fn analyze_reports_reference_rate() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "ref.json", REFERENCE);
    let v = json_of(&run(&["analyze"], &cfg));
    assert_eq!(v["achievable"], serde_json::json!(0.666666666667));
    assert_eq!(v["lemma1"], Value::Bool(true));
    assert_eq!(v["steady_state"][0], serde_json::json!(0.333333333333));
    assert_eq!(v["transition_matrix"][1][0], serde_json::json!(0.25));

    let (header, rows) = csv_of(&run(&["analyze", "--format", "csv"], &cfg).stdout);
    assert_eq!(header, ["quantity", "index", "value"]);
    assert!(rows.contains(&vec!["achievable".into(), String::new(), "0.666666666667".into()]));
}

#[test]
fn analyze_decomposable_policy() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "dec.json",
        r#"{"channel": {"battery_capacity": 1, "energy_cost": 1}, "policy": [[1, 0, 0, 0], [0, 0, 1, 0]]}"#,
    );
    let v = json_of(&run(&["analyze"], &cfg));
    assert_eq!(v["steady_state_valid"], Value::Bool(false));
    assert_eq!(v["lemma1"], Value::Bool(false));
    assert_eq!(num(&v["achievable"]), 0.0);
    assert_eq!(v["steady_state"], Value::Null);
}

#[test]
fn absent_crossover_means_noiseless() {
    let dir = TempDir::new().unwrap();
    let with = write(&dir, "a.json", REFERENCE);
    let without = write(&dir, "b.json", &REFERENCE.replace(", \"crossover\": 0", ""));
    assert_eq!(run(&["analyze"], &with).stdout, run(&["analyze"], &without).stdout);
}

#[test]
fn optimize_is_deterministic_and_meets_oracle() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "opt.json", r#"{"channel": {"battery_capacity": 1, "energy_cost": 1}}"#);
    let a = run(&["optimize"], &cfg);
    let b = run(&["optimize", "--threads", "1"], &cfg);
    assert_eq!(a.stdout, b.stdout);
    let v = json_of(&a);
    assert!(num(&v["report"]["achievable"]) >= 0.8759774594010072 - 1e-3);
    assert!(num(&v["evaluations"]) > 0.0);

    let half = write(
        &dir,
        "half.json",
        r#"{"channel": {"battery_capacity": 2, "energy_cost": 2, "crossover": 0.5}}"#,
    );
    let v = json_of(&run(&["optimize"], &half));
    assert_eq!(num(&v["report"]["achievable"]), 0.0);
    assert_eq!(v["feasible"], Value::Bool(true));
}

#[test]
fn simulate_trivial_and_low_rate() {
    let dir = TempDir::new().unwrap();
    let one = write(
        &dir,
        "one.json",
        r#"{"channel": {"battery_capacity": 1, "energy_cost": 1},
            "policy": [[0.5, 0, 0.5, 0], [0.25, 0.25, 0.25, 0.25]],
            "plan": {"n": 200, "blocks": 2, "epsilon": 0.05, "rate_fraction": 1e-9},
            "trials": 1}"#,
    );
    let v = json_of(&run(&["simulate"], &one));
    assert_eq!(v["plan"]["relay_bits"], serde_json::json!(0.0));
    for key in ["relay_block_errors", "receiver_block_errors", "end_to_end_errors", "energy_violations"] {
        assert_eq!(num(&v["counts"][key]), 0.0, "{key}");
    }

    let low = write(&dir, "low.json", REVEALING);
    let trace = dir.path().join("trace.csv");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&low)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    let v = json_of(&out);
    let stats = &v["stats"];
    assert!(num(&stats["receiver_error"]["upper"]) <= 0.05);
    assert!(num(&stats["end_to_end_error"]["rate"]) <= 0.05);
    assert_eq!(num(&stats["energy_violations"]), 0.0);
    for u in 0..2 {
        let freq = num(&stats["state_frequencies"][u]);
        let pi = num(&v["steady_state"][u]);
        assert!((freq - pi).abs() <= 2e-2, "state {u}: {freq} vs {pi}");
    }
    let rows = read_trace(std::fs::File::open(&trace).unwrap()).unwrap();
    assert_eq!(rows.len(), 2000 * 5);
    assert!(rows.iter().all(|r| r.x2 == 0 || r.state >= 1));
}

#[test]
fn output_path_flags_and_env() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "ref.json", REFERENCE);
    let out = bin()
        .args(["analyze", "--out", "nested/result.csv", "--format", "csv", "--config"])
        .arg(&cfg)
        .env(ehrelay::cli::OUT_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read(dir.path().join("nested/result.csv")).unwrap();
    let (header, _) = csv_of(&written);
    assert_eq!(header, ["quantity", "index", "value"]);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let text = REVEALING.replace("\"trials\": 50", "\"trials\": 4");
    let cfg = write(&dir, "s.json", &text);
    let a = json_of(&run(&["simulate", "--seed", "99"], &cfg));
    assert_eq!(num(&a["base_seed"]), 99.0);
    let b = json_of(&run(&["simulate", "--seed", "99", "--threads", "2"], &cfg));
    assert_eq!(a, b);
}

#[test]
fn sweep_noise_is_monotone() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "sweep.json",
        r#"{"channel": {"battery_capacity": 2, "energy_cost": 2}, "trials": 0,
            "sweep": {"parameter": "p", "values": [0, 0.1, 0.25, 0.5]}}"#,
    );
    let (header, rows) = csv_of(&run(&["sweep", "--format", "csv"], &cfg).stdout);
    assert_eq!(header, SWEEP_COLUMNS);
    let col = header.iter().position(|h| h == "achievable_rate").unwrap();
    let rates: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
    assert_eq!(*rates.last().unwrap(), 0.0);
    assert!(rows.iter().all(|r| r[2] == "reoptimize"));

    let v = json_of(&run(&["sweep"], &cfg));
    assert_eq!(v["mode"], Value::String("reoptimize".into()));
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_rate_fraction_raises_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "rf.json", REVEALING);
    let out = run(&["sweep", "--parameter", "rate_fraction", "--values", "0.5,0.8,1.2", "--format", "csv"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv_of(&out.stdout);
    let col = header.iter().position(|h| h == "receiver_error").unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
    assert!(errs.windows(2).all(|w| w[1] >= w[0]), "{errs:?}");
    assert!(rows.iter().all(|r| r[2] == "fixed_policy"));
}

#[test]
fn single_value_sweep_matches_commands() {
    let dir = TempDir::new().unwrap();
    let text = REVEALING.replace("\"trials\": 50", "\"trials\": 10");
    let cfg = write(&dir, "single.json", &text);
    let sweep = json_of(&run(&["sweep", "--parameter", "rate_fraction", "--values", "0.5"], &cfg));
    let row = &sweep["rows"][0];
    let sim = json_of(&run(&["simulate"], &cfg));
    let analyze = json_of(&run(&["analyze"], &cfg));
    assert_eq!(row["report"]["achievable"], analyze["achievable"]);
    assert_eq!(row["report"], sim["report"]);
    assert_eq!(row["stats"], sim["stats"]);
}

#[test]
fn exit_codes_by_failure_class() {
    let dir = TempDir::new().unwrap();
    let unknown_key = write(&dir, "k.json", "{\n  \"channel\": {\"battery_capacity\": 1, \"energy_cost\": 1},\n  \"trails\": 3\n}");
    let out = run(&["analyze"], &unknown_key);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let bad_policy = write(
        &dir,
        "p.json",
        r#"{"channel": {"battery_capacity": 2, "energy_cost": 2}, "policy": [[0, 0.5, 0.5, 0], [1, 0, 0, 0], [1, 0, 0, 0]]}"#,
    );
    assert_eq!(run(&["analyze"], &bad_policy).status.code(), Some(2));

    let no_policy = write(&dir, "np.json", r#"{"channel": {"battery_capacity": 1, "energy_cost": 1}}"#);
    assert_eq!(run(&["analyze"], &no_policy).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--parameter", "q", "--values", "1"], &no_policy).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], &no_policy).status.code(), Some(2));
    assert_eq!(run(&["analyze"], &dir.path().join("missing.json")).status.code(), Some(2));

    let budget = write(
        &dir,
        "b.json",
        r#"{"channel": {"battery_capacity": 3, "energy_cost": 1}, "optimizer": {"grid_resolution": 40}}"#,
    );
    assert_eq!(run(&["optimize"], &budget).status.code(), Some(3));

    let wide = write(&dir, "e.json", &REVEALING.replace("\"epsilon\": 0.02", "\"epsilon\": 0.5"));
    assert_eq!(run(&["simulate"], &wide).status.code(), Some(4));

    let out_is_dir = bin().args(["analyze", "--out"]).arg(dir.path()).arg("--config").arg(write(&dir, "r.json", REFERENCE)).output().unwrap();
    assert_eq!(out_is_dir.status.code(), Some(1));
}

#[test]
fn every_artifact_parses() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "ref.json", &REVEALING.replace("\"trials\": 50", "\"trials\": 2"));
    for cmd in ["analyze", "optimize", "simulate"] {
        for (fmt, json) in [("json", true), ("csv", false)] {
            let path = dir.path().join(format!("{cmd}.{fmt}"));
            let out = bin()
                .args([cmd, "--format", fmt, "--out"])
                .arg(&path)
                .arg("--config")
                .arg(&cfg)
                .output()
                .unwrap();
            assert_eq!(out.status.code(), Some(0), "{cmd} {fmt}");
            let bytes = std::fs::read(&path).unwrap();
            if json {
                let v: Value = serde_json::from_slice(&bytes).unwrap();
                assert_eq!(v["command"], Value::String(cmd.into()));
            } else {
                let (header, rows) = csv_of(&bytes);
                assert_eq!(header, ["quantity", "index", "value"]);
                assert!(!rows.is_empty());
            }
        }
    }
}

#[test]
fn floats_have_twelve_significant_digits() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "ref.json", REFERENCE);
    let out = run(&["analyze", "--format", "csv"], &cfg);
    let (_, rows) = csv_of(&out.stdout);
    for row in rows {
        if let Ok(x) = row[2].parse::<f64>() {
            let digits = row[2].trim_start_matches(['-', '0', '.']).chars().filter(|c| c.is_ascii_digit()).count();
            assert!(digits <= 12, "{row:?}");
            assert!(x.is_finite());
        }
    }
}
