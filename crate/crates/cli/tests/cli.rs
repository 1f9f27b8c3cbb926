use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const DOUBLE_WELL: &str = r#"{
    "schema_version": 1,
    "map": {"kind": "tanh", "beta": 2.0},
    "dim": 1,
    "covariance": [[1.0]],
    "sigma": 0.35,
    "bounds": [[-2.0, 2.0]],
    "nodes_per_axis": 201,
    "delta": 0.2,
    "r_hop": 1.0,
    "monte_carlo": {"runs": 0, "steps": 5000}
}"#;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.json"), config).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, command: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_metareduce"))
            .arg(command)
            .arg("--config")
            .arg(self.path("config.json"))
            .arg("--out")
            .arg(self.path("out"))
            .args(extra)
            .env("METAREDUCE_CACHE", self.path("cache"))
            .env("RUST_LOG", "error")
            .output()
            .unwrap()
    }
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap()
}

#[test]
fn analyze_reports_three_fixed_points() {
    let run = Run::new(DOUBLE_WELL);
    let o = run.exec("analyze", &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["summary"]["fixed_points"], 3);
    let report: Value = serde_json::from_slice(&read(&run.path("out/analysis.json"))).unwrap();
    assert_eq!(report["structure"]["balls"].as_array().unwrap().len(), 2);
}

#[test]
fn identity_map_is_a_numeric_error() {
    let cfg = DOUBLE_WELL.replace(
        r#"{"kind": "tanh", "beta": 2.0}"#,
        r#"{"kind": "polynomial", "axes": [[{"coef": 1.0, "powers": [1]}]]}"#,
    );
    let o = Run::new(&cfg).exec("analyze", &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "MarginalFixedPoint");
}

#[test]
fn missing_field_is_named() {
    let cfg = DOUBLE_WELL.replace(r#""delta": 0.2,"#, "");
    let o = Run::new(&cfg).exec("analyze", &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "Config");
    assert!(err["message"].as_str().unwrap().contains("delta"));
}

#[test]
fn bad_arguments_are_config_errors() {
    let run = Run::new(DOUBLE_WELL);
    assert_eq!(
        run.exec("analyze", &["--workers", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(run.exec("plot", &[]).status.code(), Some(2));
    let missing = Command::new(env!("CARGO_BIN_EXE_metareduce"))
        .args(["analyze", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn spectrum_rerun_uses_cache_and_is_identical() {
    let run = Run::new(DOUBLE_WELL);
    let o = run.exec("spectrum", &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["summary"]["count_above_threshold"][0], 2);
    let csv = run.path("out/spectrum_sigma0.35.csv");
    let first = read(&csv);
    let cached: Vec<_> = fs::read_dir(run.path("cache")).unwrap().collect();
    assert_eq!(cached.len(), 2);
    assert_eq!(run.exec("spectrum", &[]).status.code(), Some(0));
    assert_eq!(first, read(&csv));
}

#[test]
fn large_noise_fails_the_gap_check() {
    let run = Run::new(&DOUBLE_WELL.replace("0.35", "0.8"));
    let o = run.exec("spectrum", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout_json(&o)["summary"]["passed"], false);
}

#[test]
fn reduce_is_stochastic_and_reproducible() {
    let run = Run::new(DOUBLE_WELL);
    assert_eq!(run.exec("reduce", &["--seed", "4"]).status.code(), Some(0));
    let path = run.path("out/reduced.json");
    let first = read(&path);
    let model: Value = serde_json::from_slice(&first).unwrap();
    for row in model["p"].as_array().unwrap() {
        let s: f64 = row
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .sum();
        assert!((s - 1.0).abs() < 1e-10);
    }
    assert_eq!(run.exec("reduce", &["--seed", "4"]).status.code(), Some(0));
    assert_eq!(first, read(&path));
}

#[test]
fn theta_above_h0_is_reported() {
    let cfg = DOUBLE_WELL.replace(r#""r_hop": 1.0,"#, r#""r_hop": 1.0, "theta": 5.0,"#);
    let o = Run::new(&cfg).exec("reduce", &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "ThetaTooLarge");
}

#[test]
fn tiny_hop_radius_is_reported() {
    let cfg = DOUBLE_WELL.replace(r#""r_hop": 1.0"#, r#""r_hop": 0.001"#);
    let o = Run::new(&cfg).exec("quasipotential", &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "HopRadiusTooSmall");
}

#[test]
fn single_well_quasipotential_has_a_note() {
    let run = Run::new(&DOUBLE_WELL.replace(r#""beta": 2.0"#, r#""beta": 0.5"#));
    assert_eq!(run.exec("quasipotential", &[]).status.code(), Some(0));
    let h: Value = serde_json::from_slice(&read(&run.path("out/h.json"))).unwrap();
    assert_eq!(h["h"], serde_json::json!([[0.0]]));
    assert!(h["note"].is_string());
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let run = Run::new(DOUBLE_WELL);
    assert_eq!(
        run.exec("simulate", &["--seed", "9"]).status.code(),
        Some(0)
    );
    let events = run.path("out/events.ndjson");
    let first = read(&events);
    assert_eq!(
        run.exec("simulate", &["--seed", "9"]).status.code(),
        Some(0)
    );
    assert_eq!(first, read(&events));
    assert_eq!(
        run.exec("simulate", &["--seed", "10"]).status.code(),
        Some(0)
    );
    assert_ne!(first, read(&events));
}

#[test]
fn validate_without_budget_marks_monte_carlo_skipped() {
    let run = Run::new(DOUBLE_WELL);
    let o = run.exec("validate", &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let rows = stdout_json(&o)["summary"]["rows"].clone();
    let skipped: Vec<&str> = rows
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["status"] == "skipped")
        .map(|r| r["name"].as_str().unwrap())
        .collect();
    assert_eq!(skipped, ["committor_ldp", "diluted_trace", "ex_scaling"]);
}

#[test]
fn coarse_grid_warns_about_refinement() {
    let cfg = DOUBLE_WELL
        .replace("[[-2.0, 2.0]]", "[[-4.0, 4.0]]")
        .replace(r#""nodes_per_axis": 201"#, r#""nodes_per_axis": 51"#);
    let o = Run::new(&cfg).exec("validate", &[]);
    let rows = stdout_json(&o)["summary"]["rows"].clone();
    let row = rows
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["name"] == "refinement_stability")
        .unwrap()
        .clone();
    assert_eq!(row["status"], "warn");
}
