use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ancient-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn record(out: &Path) -> Value {
    let text = std::fs::read_to_string(out.join("run.json")).expect("run.json");
    serde_json::from_str(&text).expect("valid JSON")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv(out: &Path, file: &str) -> Vec<Vec<String>> {
    std::fs::read_to_string(out.join(file))
        .expect("csv exists")
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn is_check_key(key: &str) -> bool {
    let b = key.as_bytes();
    !b.is_empty()
        && b[0].is_ascii_lowercase()
        && b.iter().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || *c == b'_')
}

#[test]
fn spectrum_defaults_reproduce_k_squared_minus_one() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["spectrum"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv(dir.path(), "eigenvalues.csv");
    assert_eq!(rows[0], ["j", "lambda_j"]);
    assert_eq!(rows.len(), 257);
    let lambdas: Vec<f64> = rows[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    let expected = [-1.0, 0.0, 0.0, 3.0, 3.0, 8.0, 8.0, 15.0, 15.0];
    for (l, e) in lambdas.iter().zip(expected) {
        assert!((l - e).abs() < 1e-3, "{l} vs {e}");
    }
    let rec = record(dir.path());
    assert_eq!(rec["passed"], true);
    assert_eq!(rec["command"], "spectrum");
    assert_eq!(rec["config"]["n"], 256);
    let checks = rec["checks"].as_object().unwrap();
    assert!(checks.contains_key("max_eigenvalue_error"));
    assert!(checks.keys().all(|k| is_check_key(k)));
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let dir = TempDir::new().unwrap();
    assert!(lab(&["spectrum", "--n", "128"], dir.path()).status.success());
    for row in &csv(dir.path(), "eigenvalues.csv")[1..] {
        let mantissa = row[1].trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17, "{}", row[1]);
    }
}

#[test]
fn negative_dt_is_a_usage_error_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["spectrum", "--dt", "-0.1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`dt`"), "{}", stderr(&o));

    std::fs::write(dir.path().join("run.cfg"), "dt = -1\n").unwrap();
    let cfg = dir.path().join("run.cfg");
    let o = lab(&["spectrum", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`dt`"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "n = 32\nwindow_start = -3\n").unwrap();
    let o = lab(&["spectrum", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("window_start"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# coarse grid\nn = 100\ntol = 1e-9\n").unwrap();
    let o = lab(&["spectrum", "--config", cfg.to_str().unwrap(), "--n", "128"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv(dir.path(), "eigenvalues.csv").len(), 129);
    let rec = record(dir.path());
    assert_eq!(rec["config"]["n"], 128);
    assert_eq!(rec["config"]["tol"], 1e-9);
}

#[test]
fn failing_check_exits_one_and_names_the_key() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["evolve", "--n", "64", "--t-end", "0.2", "--tol", "1e-12"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("check failed: energy_identity_gap"), "{}", stderr(&o));
    let rec = record(dir.path());
    assert_eq!(rec["passed"], false);
    assert_eq!(rec["checks"]["energy_max_increase"]["passed"], true);
}

#[test]
fn overall_status_is_the_conjunction_of_checks() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["evolve", "--n", "128", "--t-end", "0.3", "--every", "50"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rec = record(dir.path());
    let all = rec["checks"]
        .as_object()
        .unwrap()
        .values()
        .all(|c| c["passed"] == true);
    assert_eq!(rec["passed"], all);
    let rows = csv(dir.path(), "trajectory.csv");
    assert_eq!(rows[0][0], "t");
    assert_eq!(rows[0].len(), 129);
    // 301 samples at dt = 1e-3, every 50th plus the last.
    assert_eq!(rows.len(), 1 + 7);
    let energy = csv(dir.path(), "energy.csv");
    let values: Vec<f64> = energy[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn mz_verify_is_deterministic_per_seed() {
    let runs: Vec<(TempDir, String)> = ["7", "7", "8"]
        .iter()
        .map(|seed| {
            let dir = TempDir::new().unwrap();
            let o = lab(&["mz-verify", "--trials", "40", "--seed", seed], dir.path());
            assert!(o.status.success(), "{}", stderr(&o));
            let text = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
            (dir, text)
        })
        .collect();
    assert_eq!(runs[0].1, runs[1].1);
    assert_ne!(runs[0].1, runs[2].1);
    assert_eq!(runs[0].1.lines().count(), 41);
    assert!(runs[0].1.lines().nth(1).unwrap().starts_with("7,"));
}

#[test]
fn construct_matches_the_rotation_invariant_solution() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["construct", "--n", "64", "--t-max", "6", "--a", "0.1", "--every", "1000"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv(dir.path(), "trajectory.csv");
    let b = (0.1 / (2.0 * (2.0 * std::f64::consts::PI).sqrt())).tan();
    for row in &rows[1..] {
        let t: f64 = row[0].parse().unwrap();
        let exact = 2.0 * (b * t.exp()).atan();
        for v in &row[1..] {
            assert!((v.parse::<f64>().unwrap() - exact).abs() < 1e-6);
        }
    }
    assert_eq!(rows.len(), 1 + 7);
    let history = csv(dir.path(), "history.csv");
    assert_eq!(history[0], ["iteration", "distance"]);
}

#[test]
fn construct_rejects_wrong_parameter_length() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["construct", "--n", "32", "--a", "0.1,0.1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`a`"));
}

#[test]
fn characterize_reports_the_unit_decay_rate() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["characterize", "--n", "64"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rec = record(dir.path());
    let rate = rec["checks"]["dominant_mode_decay_rate"]["value"].as_f64().unwrap();
    assert!((rate - 1.0).abs() < 0.02);
    assert_eq!(csv(dir.path(), "modes.csv")[0], ["t", "u_minus", "u_zero", "u_plus", "l2", "sigma"]);
}

#[test]
fn parametric_latitude_extinguishes_on_time() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["evolve", "--latitude", "0.7", "--t-end", "2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rec = record(dir.path());
    let t_ext = rec["metadata"]["extinction_time"].as_f64().unwrap();
    assert!((t_ext + 0.7f64.sin().ln()).abs() < 1e-6);
}

#[test]
fn critical_manifold_samples_the_equator_rotations() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["critical-manifold", "--n", "128", "--per-axis", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv(dir.path(), "critical_set.csv");
    assert_eq!(rows[0], ["a_1", "a_2", "a_fin", "gradient_norm", "critical"]);
    assert_eq!(rows.len(), 1 + 9);
    for row in &rows[1..] {
        let energy: f64 = row[2].parse().unwrap();
        assert!((energy - 2.0 * std::f64::consts::PI).abs() < 1e-6);
    }
}

#[test]
fn slow_example_with_a_tabulated_arrival() {
    let dir = TempDir::new().unwrap();
    let table: String = (1..=200)
        .map(|k| {
            let s = k as f64 / 200.0;
            format!("{s},{}\n", s.ln())
        })
        .collect();
    let path = dir.path().join("tau.csv");
    std::fs::write(&path, table).unwrap();
    let o = lab(&["slow-example", "--tau-file", path.to_str().unwrap(), "--tol", "1e-3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rec = record(dir.path());
    assert!(rec["checks"].get("l1_classification").is_none());
    assert_eq!(csv(dir.path(), "arrival.csv")[0], ["t", "s"]);
}

#[test]
fn slow_example_exp_is_convergent() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["slow-example", "--arrival", "exp"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rec = record(dir.path());
    assert_eq!(rec["checks"]["l1_classification"]["passed"], true);
    assert!(rec["checks"]["arrival_residual"]["value"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn accept_runs_a_selected_criterion() {
    let dir = TempDir::new().unwrap();
    let o = lab(&["accept", "--only", "10"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rec = record(dir.path());
    assert_eq!(rec["checks"]["parametric_latitude_flow"]["passed"], true);
    let o = lab(&["accept", "--only", "11"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
