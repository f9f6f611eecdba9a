use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use acar::fit::aic_value;
use acar::mc::{run_recovery_study, MCDesign};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_acar"));
    c.env("ACAR_THREADS", "2");
    c
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn simulated(dir: &Path, name: &str, seed: &str) -> String {
    let path = dir.join(name);
    let body = ok(&[
        "simulate",
        "--k",
        "2",
        "--p",
        "2",
        "--n",
        "150",
        "--theta",
        "0.2,-0.1,0.8,-0.6,0.3,-0.2,0.5,0.3",
        "--seed",
        seed,
    ]);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn every_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d1 = simulated(dir.path(), "a.csv", "1");
    let d2 = simulated(dir.path(), "b.csv", "2");
    let climate = fixture("climate_daily.csv");
    let climate = climate.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "simulate", "--k", "3", "--p", "5", "--n", "120", "--theta", "table1:1", "--seed", "7",
        ],
        vec![
            "simulate", "--theta", "table1:2", "--n", "60", "--seed", "7", "--format", "json",
        ],
        vec![
            "fit",
            "--series",
            &d1,
            "--covariates",
            &d1,
            "--seed",
            "3",
            "--n-starts",
            "4",
        ],
        vec![
            "diagnose",
            "--series",
            &d1,
            "--covariates",
            &d1,
            "--q",
            "1,2",
            "--seed",
            "3",
            "--n-starts",
            "4",
        ],
        vec![
            "compare",
            "--series1",
            &d1,
            "--covariates1",
            &d1,
            "--series2",
            &d2,
            "--covariates2",
            &d2,
            "--s-mode",
            "empirical",
            "--seed",
            "3",
            "--n-starts",
            "4",
        ],
        vec![
            "mc",
            "--design",
            "recovery",
            "--n",
            "120",
            "--b",
            "2",
            "--n-starts",
            "2",
            "--seed",
            "9",
        ],
        vec![
            "mc",
            "--design",
            "scenario",
            "--scenario",
            "3",
            "--n",
            "120",
            "--b",
            "2",
            "--n-starts",
            "2",
            "--seed",
            "9",
        ],
        vec!["build-covariates", "--climate", climate, "--format", "json"],
        vec![
            "search",
            "--series",
            &d1,
            "--covariates",
            &d1,
            "--seed",
            "3",
            "--n-starts",
            "2",
        ],
    ];
    for args in commands {
        let a = ok(&args);
        let b = ok(&args);
        assert!(!a.is_empty());
        assert_eq!(a, b, "{args:?} is not reproducible");
        if args.contains(&"json") || !matches!(args[0], "simulate" | "build-covariates") {
            serde_json::from_slice::<Value>(&a).unwrap_or_else(|e| panic!("{args:?}: invalid JSON: {e}"));
        }
    }
}

#[test]
fn simulate_reference_command_emits_csv() {
    let body = ok(&[
        "simulate", "--k", "3", "--p", "5", "--n", "500", "--theta", "table1:1", "--seed", "7",
    ]);
    let text = String::from_utf8(body).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("year,level,x1,x2,x3,x4,x5"));
    assert_eq!(lines.count(), 500);
}

#[test]
fn fit_report_aic_recomputes_from_negloglik() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulated(dir.path(), "a.csv", "11");
    let out_path = dir.path().join("fit.json");
    ok(&[
        "fit",
        "--series",
        &d,
        "--covariates",
        &d,
        "--n-starts",
        "3",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let nll = v["negloglik"].as_f64().unwrap();
    let dim = v["theta_hat"]["values"].as_array().unwrap().len();
    assert_eq!(dim, 8);
    assert!((v["aic"].as_f64().unwrap() - aic_value(nll, dim)).abs() < 1e-9);
    for key in [
        "covariance",
        "std_errors",
        "j_hat",
        "l_hat",
        "residuals",
        "converged",
        "at_bound",
        "parameter_names",
    ] {
        assert!(v.get(key).is_some(), "missing key {key}");
    }
}

#[test]
fn threshold_is_reported_for_quadratic_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulated(dir.path(), "a.csv", "12");
    let out = ok(&[
        "fit",
        "--series",
        &d,
        "--covariates",
        &d,
        "--n-starts",
        "3",
        "--threshold",
        "x1,x2",
    ]);
    let v: Value = serde_json::from_slice(&out).unwrap();
    let t = &v["threshold"]["estimate"];
    let est = t["estimate"].as_f64().unwrap();
    let mid = (t["ci_low"].as_f64().unwrap() + t["ci_high"].as_f64().unwrap()) / 2.0;
    assert!((est - mid).abs() < 1e-9);
    let raw = v["threshold"]["raw_units"]["estimate"].as_f64().unwrap();
    assert!((raw - est / 0.1).abs() < 1e-9);
}

#[test]
fn mc_command_matches_library() {
    let out = ok(&[
        "mc",
        "--design",
        "recovery",
        "--theta",
        "table1:1",
        "--n",
        "120",
        "--b",
        "2",
        "--n-starts",
        "2",
        "--seed",
        "4",
    ]);
    let mut design = MCDesign::new(acar::simulation_design(1).unwrap(), vec![120], 2, 4);
    design.fit_config.n_starts = 2;
    design.fit_config.seed = 4;
    let lib = serde_json::to_string_pretty(&run_recovery_study(&design).unwrap()).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().trim_end(), lib);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulated(dir.path(), "a.csv", "13");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 3\n[fit]\nn_starts = 4\n").unwrap();
    let a = ok(&[
        "fit",
        "--series",
        &d,
        "--covariates",
        &d,
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let b = ok(&[
        "fit",
        "--series",
        &d,
        "--covariates",
        &d,
        "--seed",
        "3",
        "--n-starts",
        "4",
    ]);
    assert_eq!(a, b);
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(
        run(&["fit", "--series", &d, "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn exit_codes() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["fit"]).status.code(), Some(1));
    assert_eq!(run(&["fit", "--series", "/does/not/exist.csv"]).status.code(), Some(1));
    assert_eq!(
        run(&["simulate", "--n", "10", "--theta", "table1:9"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    // A constant series gives a singular information matrix.
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("s.csv");
    let mut text = String::from("year,level,x1,x2\n");
    for y in 0..40 {
        text.push_str(&format!(
            "{},0,{},{}\n",
            1900 + y,
            (y % 3) as f64,
            ((y % 3) * (y % 3)) as f64
        ));
    }
    std::fs::write(&series, text).unwrap();
    let s = series.to_str().unwrap();
    let out = run(&[
        "fit",
        "--series",
        s,
        "--covariates",
        s,
        "--k",
        "1",
        "--n-starts",
        "2",
        "--threshold",
        "x1,x2",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn thread_variable_is_validated() {
    let out = bin()
        .env("ACAR_THREADS", "zero")
        .args(["simulate", "--theta", "table1:1", "--n", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn build_covariates_aligns_to_response_years() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("s.csv");
    std::fs::write(&series, "year,proportion\n2003,0\n2004,0.2\n2005,0.5\n").unwrap();
    let out = ok(&[
        "build-covariates",
        "--climate",
        fixture("climate_daily.csv").to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
        "--lag",
        "2",
        "--format",
        "json",
    ]);
    let v: Value = serde_json::from_slice(&out).unwrap();
    // Response year y takes the climate row of year y - 1.
    let years: Vec<i64> = v["years"]
        .as_array()
        .unwrap()
        .iter()
        .map(|y| y.as_i64().unwrap())
        .collect();
    assert_eq!(years, vec![2003, 2004]);
    assert_eq!(v["dropped_response_years"], serde_json::json!([2005]));
}
