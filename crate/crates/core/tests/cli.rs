use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dynmax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynmax"))
        .args(args)
        .env_remove("DYNMAX_OUT")
        .output()
        .expect("binary runs")
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

fn sweep_column(path: &Path, column: &str) -> Vec<f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let idx = reader.headers().unwrap().iter().position(|h| h == column).unwrap();
    reader
        .records()
        .map(|r| r.unwrap()[idx].parse().unwrap())
        .collect()
}

#[test]
fn run_writes_trace_summary_and_plotdata() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dynmax(&["run", "--scenario", "line6_admc", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(first_line(&dir.path().join("trace.csv")), "tick,agent,x,u,e,n_active");
    assert!(first_line(&dir.path().join("plotdata/states.csv")).starts_with("tick,"));
    assert_eq!(first_line(&dir.path().join("plotdata/error.csv")), "tick,e,epsilon");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["convergence_time"], 180);
    assert!((summary["tracking_bound"].as_f64().unwrap() - 0.27).abs() < 1e-12);
}

#[test]
fn size_estimation_reports_closed_form_and_monte_carlo() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dynmax(&["size-est", "ba100_dse_edmc", "--out", out, "--trials", "2000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(first_line(&dir.path().join("trace.csv")), "tick,agent,n_hat");
    assert!(first_line(&dir.path().join("plotdata/size_estimate.csv")).starts_with("tick,"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!((summary["expected_closed_form"].as_f64().unwrap() - 5000.0 / 49.0).abs() < 1e-9);
    assert!(summary["ci99"].is_array());
}

#[test]
fn bounds_prints_the_closed_forms() {
    let o = dynmax(&["bounds", "--protocol", "admc", "--diameter", "5", "--alpha", "0.03", "--slope", "0.02", "--overshoot", "1.8"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("convergence_time: 180"), "{text}");
    assert!(text.contains("transient_time: 5"), "{text}");
}

#[test]
fn exit_codes_distinguish_assumption_and_configuration_errors() {
    let o = dynmax(&["bounds", "--protocol", "admc", "--diameter", "5", "--alpha", "0.01", "--slope", "0.02"]);
    assert_eq!(o.status.code(), Some(2));

    let o = dynmax(&["bounds", "--protocol", "edmc", "--depth", "3", "--diameter", "5"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nhorizon = 10\n").unwrap();
    let o = dynmax(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let o = dynmax(&["validate", "no_such_preset"]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(dynmax(&["validate", "line6_edmc"]).status.code(), Some(0));
}

#[test]
fn alpha_sweep_trades_accuracy_for_speed() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dynmax(&["sweep", "line6_admc", "--grid", "alpha=0.03,0.06,0.12", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("sweep.csv");
    let eps = sweep_column(&csv, "eps_theory");
    let tc = sweep_column(&csv, "tc_theory");
    assert_eq!(eps.len(), 3);
    assert!(eps.windows(2).all(|w| w[0] < w[1]), "{eps:?}");
    assert!(tc.windows(2).all(|w| w[0] > w[1]), "{tc:?}");
}

#[test]
fn depth_sweep_keeps_constant_inputs_exact() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("const.toml");
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/line6_edmc.toml")).unwrap();
    // Drop the per-agent overrides so every input stays at its default.
    let kept = text.split("\n[signals.agents").next().unwrap();
    assert!(kept.len() < text.len());
    std::fs::write(&scenario, kept).unwrap();
    let out = dir.path().join("out");
    let o = dynmax(&[
        "sweep",
        "--scenario",
        scenario.to_str().unwrap(),
        "--grid",
        "depth=5,6,8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = out.join("sweep.csv");
    assert_eq!(sweep_column(&csv, "tc_theory"), vec![5.0, 6.0, 8.0]);
    assert!(sweep_column(&csv, "eps_emp").iter().all(|&e| e <= 1e-12));
    assert!(sweep_column(&csv, "tc_emp").iter().all(|&t| t <= 8.0));
}

#[test]
fn auto_seed_is_reported() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dynmax(&["run", "line6_edmc", "--seed", "auto", "--out", out]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed: "));
}
