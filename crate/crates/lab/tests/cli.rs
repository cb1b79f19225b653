use std::path::Path;
use std::process::Command;

use restoration_lab::{parse_config, run_scenario, strip_timestamp, RunReport, Scenario};

const SMALL: &str = r#"{
  "eval": {"n_eval": 200, "n_robust_inputs": 20, "n_std_inputs": 10, "with_w2": false},
  "n_samples": 100,
  "n_inputs": 5,
  "m": 32,
  "total_steps": 20,
  "hidden": [8, 8],
  "train_size": 512,
  "val_size": 256
}"#;

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lab"))
}

fn schema() -> serde_json::Value {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json"))
        .unwrap();
    serde_json::from_str(&text).unwrap()
}

fn assert_valid(report: &str) {
    let instance: serde_json::Value = serde_json::from_str(report).unwrap();
    let validator = jsonschema::validator_for(&schema()).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

#[test]
fn unknown_scenario_is_usage_error() {
    let out = lab().arg("no-such-scenario").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = lab()
        .args(["ellipse-demo", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"lambda_R": -1}"#).unwrap();
    let out = lab()
        .args(["toy-gan", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_R"));
}

#[test]
fn cli_run_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let out_dir = dir.path().join("run");
    let out = lab()
        .args(["analytic-demo", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for label in ["data", "sine_alpha1", "sine_alpha50", "posterior"] {
        assert!(out_dir.join(format!("samples_{label}.csv")).is_file(), "{label}");
        assert!(out_dir.join(format!("scatter_{label}.svg")).is_file(), "{label}");
    }
    let text = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    assert_valid(&text);
    let report: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.seed, 3);
    assert_eq!(report.estimators.len(), 3);
}

#[test]
fn every_scenario_validates_and_is_deterministic() {
    let settings = parse_config(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for sc in Scenario::ALL {
        let a = dir.path().join(format!("{sc}-a"));
        let b = dir.path().join(format!("{sc}-b"));
        run_scenario(sc, &settings, &a, 11).unwrap();
        run_scenario(sc, &settings, &b, 11).unwrap();
        let ta = std::fs::read_to_string(a.join("report.json")).unwrap();
        let tb = std::fs::read_to_string(b.join("report.json")).unwrap();
        assert_valid(&ta);
        assert_eq!(strip_timestamp(&ta), strip_timestamp(&tb), "{sc}");
        assert!(ta.contains("\"generated_at\""));
    }
}

#[test]
fn epsilon_override_reaches_the_report() {
    let mut settings = parse_config(SMALL).unwrap();
    settings.eval.attack.epsilon = 2e-3;
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(Scenario::EllipseDemo, &settings, dir.path(), 0).unwrap();
    assert_eq!(r.config["eval"]["attack"]["epsilon"], serde_json::json!(0.002));
    // the flat estimator's attacked objective is at least ε²
    assert!(r.estimators.iter().all(|e| e.metrics.robustness_practical >= 4e-6 * (1.0 - 1e-9)));
}
