use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn epsctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epsctl")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("missing {key}"))
}

fn csv_rows(out: &Output) -> Vec<Vec<String>> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn analyze_reference_system() {
    let v = stdout_json(&epsctl(&["analyze", "--system", &fixture("illustrative.json")]));
    assert!((num(&v, "eps") - 0.914).abs() < 5e-3);
    assert!((num(&v, "alpha_hat") - 0.67).abs() < 0.02);
    assert!((num(&v, "omega") - 1.144).abs() < 5e-3);
    assert!((num(&v["gains"], "peak_to_peak") - 5.0 / 6.0).abs() < 5e-3);
    assert!((num(&v["gains"], "integral_to_peak") - 1.0).abs() < 5e-3);
    assert!(v["chain_checks"].as_array().unwrap().iter().all(|c| c["holds"] == true));
}

#[test]
fn analyze_scalar_lag() {
    let v = stdout_json(&epsctl(&["analyze", "--system", &fixture("scalar.json")]));
    assert!((num(&v, "h2") - 0.5f64.sqrt()).abs() < 1e-9);
    for key in ["eps", "star", "star_prime", "omega"] {
        assert!((num(&v, key) - 1.0).abs() < 5e-3, "{key} = {}", num(&v, key));
    }
}

#[test]
fn analyze_rejects_unstable_and_malformed_input() {
    let out = epsctl(&["analyze", "--system", &fixture("unstable.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unstable"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"A\": [[1, 2], [3]]").unwrap();
    let out = epsctl(&["analyze", "--system", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = epsctl(&["analyze", "--system", "/nonexistent/system.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synthesize_benchmark_output_feedback() {
    let out = epsctl(&["synthesize", "--plant", &fixture("benchmark_minus1.json"), "--kind", "of"]);
    let v = stdout_json(&out);
    assert!((num(&v, "eps_norm") - 6.62).abs() < 0.05);
    assert!((num(&v, "alpha_hat") - 0.43).abs() < 0.01);
    let k = &v["k"][0];
    assert!((k[0].as_f64().unwrap() + 0.81).abs() < 0.02 && (k[1].as_f64().unwrap() + 1.85).abs() < 0.02);
    assert!(num(&v, "max_form_gap") <= 1e-8);
    assert!(stderr(&out).contains("alpha_hat"));
}

#[test]
fn synthesize_reports_structural_violation() {
    let out = epsctl(&["synthesize", "--plant", &fixture("nonorthogonal_sf.json"), "--kind", "sf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("orthogonality violated"));
}

#[test]
fn scan_counterexample_has_two_minima() {
    let out = epsctl(&["scan", "--plant", &fixture("nonconvex_sf.json"), "--kind", "sf", "--alpha-points", "400"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&out);
    assert_eq!(rows[0], ["alpha", "eps_alpha"]);
    let curve: Vec<(f64, f64)> = rows[1..].iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    assert_eq!(curve.len(), 400);
    let minima: Vec<f64> =
        (1..curve.len() - 1).filter(|&i| curve[i].1 < curve[i - 1].1 && curve[i].1 <= curve[i + 1].1).map(|i| curve[i].0).collect();
    assert_eq!(minima.len(), 2, "{minima:?}");
    assert!((minima[0] - 0.09).abs() < 0.02 && (minima[1] - 2.06).abs() < 0.1);
}

#[test]
fn scan_scalar_matches_closed_form() {
    let out = epsctl(&["scan", "--system", &fixture("scalar.json"), "--alpha-points", "30"]);
    for r in &csv_rows(&out)[1..] {
        let (a, e): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        let exact = (1.0 / (a * (2.0 - a))).sqrt();
        assert!((e - exact).abs() <= 1e-9 * exact);
    }
}

#[test]
fn sets_exports_polygons_and_checks_inclusions() {
    let out = epsctl(&["sets", "--system", &fixture("illustrative.json"), "--dirs", "120"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&out);
    assert_eq!(rows[0], ["kind", "index", "x1", "x2"]);
    for label in ["reach_inf", "reach_1", "obs_1", "obs_inf", "ellipse_p_alpha", "ellipse_q_tilde"] {
        assert!(rows.iter().any(|r| r[0] == label), "{label}");
    }
    let log = stderr(&out);
    assert_eq!(log.matches("(ok)").count(), 4, "{log}");

    let out = epsctl(&["sets", "--system", &fixture("three_state.json")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_worst_case_stays_in_the_ellipsoid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let out = epsctl(&[
        "simulate",
        "--system",
        &fixture("illustrative.json"),
        "--alpha",
        "0.67",
        "--dt",
        "0.01",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("traj.csv.json")).unwrap()).unwrap();
    assert!(num(&side["invariance"], "max_v") <= 1.005);
    assert_eq!(side["policy"], "worst_case");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,x1,x2,z1,v\n"));
    assert_eq!(text.lines().count(), 3002);
}

#[test]
fn simulate_zero_policy_reports_decay() {
    let out = epsctl(&["simulate", "--system", &fixture("illustrative.json"), "--policy", "zero", "--x0", "3,-1", "--dt", "0.01"]);
    assert!(stderr(&out).contains("v monotone decreasing: yes"), "{}", stderr(&out));
}

#[test]
fn simulate_rejects_bad_seed() {
    let out = epsctl(&["simulate", "--system", &fixture("illustrative.json"), "--policy", "random", "--seed", "x1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_synthesized_loop_from_gains() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("gains.json");
    let out = epsctl(&[
        "synthesize",
        "--plant",
        &fixture("benchmark_minus1.json"),
        "--kind",
        "of",
        "--out",
        gains.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = epsctl(&[
        "simulate",
        "--plant",
        &fixture("benchmark_minus1.json"),
        "--kind",
        "of",
        "--gains",
        gains.to_str().unwrap(),
        "--policy",
        "random",
        "--seed",
        "4",
        "--t-end",
        "2",
        "--dt",
        "0.01",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(csv_rows(&out)[0], ["t", "x1", "x2", "x3", "x4", "z1", "z2", "z3", "v"]);
}

#[test]
fn compare_reproduces_the_benchmark_table() {
    let v = stdout_json(&epsctl(&["compare"]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let eps: Vec<f64> = rows.iter().map(|r| num(r, "eps_norm")).collect();
    assert!((eps[0] - 6.62).abs() < 0.05);
    assert!((eps[2] - 15.3).abs() < 0.15);
    assert!(eps[0] < eps[1] && eps[1] < eps[2]);
    assert!((num(&rows[2], "alpha_hat") - 0.82).abs() < 0.02);
    for r in rows {
        assert!(num(r, "max_form_gap") <= 1e-8);
        assert!(num(r, "realization_gap") <= 1e-8);
    }
}

#[test]
fn compare_rejects_out_of_range_beta() {
    let out = epsctl(&["compare", "--beta-min", "-2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_are_deterministic() {
    let args = ["simulate", "--system", &fixture("illustrative.json"), "--policy", "random", "--seed", "11", "--t-end", "3"];
    assert_eq!(epsctl(&args).stdout, epsctl(&args).stdout);
    let args = ["analyze", "--system", &fixture("illustrative.json")];
    assert_eq!(epsctl(&args).stdout, epsctl(&args).stdout);
}

#[test]
fn wrong_format_is_a_usage_error() {
    let out = epsctl(&["analyze", "--system", &fixture("scalar.json"), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(2));
}
