use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn myis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_myis"))
        .args(args)
        .current_dir(dir)
        .env_remove("MYIS_OUTPUT_DIR")
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn myis")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn toy(d: usize, n: usize) -> Value {
    json!({ "model": { "type": "toy", "beta": 1, "d": d }, "sampler": { "kind": "my_mala", "seed": 3 }, "n": n })
}

#[test]
fn tune_toy_lands_in_window() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "toy.json", &toy(20, 1000));
    let o = myis(dir.path(), &["tune", "--config", "toy.json", "--output", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = read_json(dir.path().join("out/tune.json"));
    let ne = t["ne_ratio"].as_f64().unwrap();
    assert!((0.4..=0.8).contains(&ne), "n_e/n {ne}");
    assert_eq!(t["method"], "window");
    let meta = read_json(dir.path().join("out/tune.json.meta.json"));
    assert_eq!(meta["seed"], 3);
    assert!(meta["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert!(meta["runtime_secs"].as_f64().unwrap() >= 0.0);
    assert_eq!(meta["config"]["model"]["d"], 20);
}

#[test]
fn tune_gaussian_uses_closed_form() {
    let dir = TempDir::new().unwrap();
    let (s, d) = (2.0, 4usize);
    let cfg = json!({
        "model": { "type": "gaussian", "d": d, "variance": s },
        "sampler": { "kind": "my_hmc" },
        "n": 1000
    });
    write_config(dir.path(), "g.json", &cfg);
    let o = myis(dir.path(), &["tune", "--config", "g.json", "--output", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = read_json(dir.path().join("out/tune.json"));
    let lambda = t["lambda"].as_f64().unwrap();
    let star = s / d as f64;
    assert!(lambda >= 0.5 * star && lambda <= 2.0 * star, "lambda {lambda}");
    assert_eq!(t["method"], "gaussian_optimal");
}

#[test]
fn missing_data_file_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "model": { "type": "trendfilter", "data": "missing/y.csv" },
        "sampler": { "kind": "my_hmc" },
        "lambda": 0.01,
        "n": 100
    });
    write_config(dir.path(), "tf.json", &cfg);
    let o = myis(dir.path(), &["run", "--config", "tf.json", "--output", "out"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing/y.csv"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(myis(dir.path(), &["frobnicate"]).status.code(), Some(1));
    write_config(dir.path(), "toy.json", &toy(2, 100));
    let o = myis(dir.path(), &["run", "--config", "toy.json", "--set", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
    let o = myis(dir.path(), &["run", "--config", "toy.json", "--set", "n=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(myis(dir.path(), &["--help"]).status.success());
}

#[test]
fn stuck_sampler_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "model": { "type": "toy", "beta": 1, "d": 50 },
        "sampler": { "kind": "my_mala", "step": 1e6, "warm_start": "origin" },
        "lambda": 0.01,
        "n": 2000
    });
    write_config(dir.path(), "bad.json", &cfg);
    let o = myis(dir.path(), &["run", "--config", "bad.json", "--output", "out"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn runs_are_deterministic_and_replicates_differ() {
    let dir = TempDir::new().unwrap();
    let mut cfg = toy(3, 2000);
    cfg["lambda"] = json!(0.3);
    cfg["replicates"] = json!(2);
    write_config(dir.path(), "toy.json", &cfg);
    for out in ["a", "b"] {
        let o = myis(dir.path(), &["run", "--config", "toy.json", "--output", out, "--jobs", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let p = dir.path();
    for f in ["report.json", "trace_0.bin", "trace_1.bin", "components.csv"] {
        assert_eq!(fs::read(p.join("a").join(f)).unwrap(), fs::read(p.join("b").join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(p.join("a/trace_0.bin")).unwrap(), fs::read(p.join("a/trace_1.bin")).unwrap());
    let o = myis(p, &["run", "--config", "toy.json", "--output", "c", "--seed", "4"]);
    assert!(o.status.success());
    assert_ne!(fs::read(p.join("a/trace_0.bin")).unwrap(), fs::read(p.join("c/trace_0.bin")).unwrap());
}

#[test]
fn smoke_run_schema_and_sidecars() {
    let dir = TempDir::new().unwrap();
    let mut cfg = toy(2, 100);
    cfg["lambda"] = json!(0.5);
    cfg["trace_format"] = json!("csv");
    write_config(dir.path(), "toy.json", &cfg);
    let o = Command::new(env!("CARGO_BIN_EXE_myis"))
        .args(["run", "--config", "toy.json"])
        .current_dir(dir.path())
        .env("MYIS_OUTPUT_DIR", dir.path().join("env-out"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("env-out");
    let report = read_json(out.join("report.json"));
    let rep = &report["replicates"][0]["report"];
    assert_eq!(rep["n"], 100);
    for key in ["theta_hat", "xi_hat", "xi_diag", "mcse", "kong_ess", "mcmc_ess", "quantiles"] {
        assert!(rep.get(key).is_some(), "missing {key}");
    }
    assert_eq!(rep["theta_hat"].as_array().unwrap().len(), 2);
    for entry in fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if !name.ends_with(".meta.json") {
            assert!(out.join(format!("{name}.meta.json")).exists(), "no sidecar for {name}");
        }
    }
    let header = fs::read_to_string(out.join("trace_0.csv")).unwrap();
    assert!(header.starts_with("x0,x1,log_weight,accepted"));
}

#[test]
fn report_recomputes_run_estimates() {
    let dir = TempDir::new().unwrap();
    let mut cfg = toy(3, 3000);
    cfg["lambda"] = json!(0.4);
    cfg["quantile_requests"] = json!([{ "component": 2, "alpha": 0.5 }]);
    write_config(dir.path(), "toy.json", &cfg);
    assert!(myis(dir.path(), &["run", "--config", "toy.json", "--output", "run"]).status.success());
    let o = myis(dir.path(), &["report", "--config", "toy.json", "--output", "rep", "run/trace_0.bin"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = read_json(dir.path().join("run/report.json"));
    let b = read_json(dir.path().join("rep/report.json"));
    assert_eq!(a["replicates"][0]["report"], b["replicates"][0]["report"]);
    assert!(dir.path().join("rep/band.csv").exists());
}

#[test]
fn trendfilter_band_covers_every_component() {
    let dir = TempDir::new().unwrap();
    let m = 20;
    let requests: Vec<Value> = (0..m)
        .flat_map(|i| [json!({ "component": i, "alpha": 0.025 }), json!({ "component": i, "alpha": 0.975 })])
        .collect();
    let cfg = json!({
        "model": { "type": "trendfilter", "m": m },
        "sampler": { "kind": "my_hmc", "seed": 2 },
        "lambda": 0.01,
        "n": 2000,
        "write_trace": false,
        "quantile_requests": requests
    });
    write_config(dir.path(), "tf.json", &cfg);
    let o = myis(dir.path(), &["run", "--config", "tf.json", "--output", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let band = fs::read_to_string(dir.path().join("out/band.csv")).unwrap();
    let lines: Vec<&str> = band.lines().collect();
    assert_eq!(lines[0], "replicate,component,q0.025,q0.975");
    assert_eq!(lines.len(), m + 1);
    for line in &lines[1..] {
        let cells: Vec<f64> = line.split(',').skip(2).map(|c| c.parse().unwrap()).collect();
        assert!(cells[0] < cells[1], "{line}");
    }
    assert!(!dir.path().join("out/trace_0.bin").exists());
}

#[test]
fn self_comparison_is_near_one() {
    let dir = TempDir::new().unwrap();
    let mut cfg = toy(2, 2000);
    cfg["lambda"] = json!(0.5);
    cfg["replicates"] = json!(20);
    write_config(dir.path(), "a.json", &cfg);
    let o = myis(dir.path(), &["compare", "--config", "a.json", "--against", "a.json", "--output", "cmp"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = read_json(dir.path().join("cmp/compare.json"));
    let eff = c["eff_rel"].as_f64().unwrap();
    assert!((0.8..=1.25).contains(&eff), "eff_rel {eff}");
    let csv = fs::read_to_string(dir.path().join("cmp/compare.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "component,ratio,acf_lag,acf_diff");
    assert!(dir.path().join("cmp/compare.csv.meta.json").exists());
}

#[test]
fn direct_kernel_inherits_lambda_in_compare() {
    let dir = TempDir::new().unwrap();
    let mut a = toy(2, 1000);
    a["replicates"] = json!(2);
    let mut b = a.clone();
    b["sampler"]["kind"] = json!("p_mala");
    write_config(dir.path(), "a.json", &a);
    write_config(dir.path(), "b.json", &b);
    let o = myis(dir.path(), &["compare", "--config", "a.json", "--against", "b.json", "--output", "cmp"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = read_json(dir.path().join("cmp/compare.json"));
    assert_eq!(c["lambda_a"], c["lambda_b"]);
    let tb = read_json(dir.path().join("cmp/tune_b.json"));
    assert_eq!(tb["method"], "inherited");
    // Without a partner the direct kernel needs an explicit lambda.
    let o = myis(dir.path(), &["tune", "--config", "b.json", "--output", "t"]);
    assert_eq!(o.status.code(), Some(1));
}
