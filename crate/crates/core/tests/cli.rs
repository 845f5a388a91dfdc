use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wildriff"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const MINIMAL: &str = r#"{
    "data": {"experiment": "exp1", "n": 300, "seed": 4},
    "trainer": {"name": "fourier_ridge"},
    "evaluation": {"K": 2, "K1": 1, "rho": {"mode": "fixed_grid", "grid": [1.0]}},
    "oracle": {"n_mc": 500}
}"#;

const GRID5: &str = r#"{
    "data": {"experiment": "exp1", "n": 300, "seed": 4},
    "trainer": {"name": "fourier_ridge"},
    "evaluation": {"K": 3, "K1": 1, "rho": {"mode": "fixed_grid", "grid": [0.1, 0.5, 1.0, 2.0, 5.0]}},
    "oracle": {"n_mc": 500}
}"#;

fn evaluate(config: &str, extra: &[&str]) -> (tempfile::TempDir, std::process::Output) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), config);
    let out = dir.path().join("out");
    let output = bin()
        .arg("evaluate")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (dir, output)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn minimal_run_writes_both_files() {
    let (dir, output) = evaluate(MINIMAL, &[]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let out = dir.path().join("out");
    let rounds = std::fs::read_to_string(out.join("rounds.csv")).unwrap();
    assert_eq!(rounds.lines().count(), 3, "{rounds}");
    assert!(rounds.starts_with("k,m,rho1,rho2,opt_tilde,opt_check,norm_tilde,norm_check,trainer_tol\n"));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["bounds"].as_array().unwrap().len(), 1);
    assert_eq!(summary["rounds"].as_array().unwrap().len(), 2);
    let oracle = read_json(&out.join("oracle.json"));
    assert!(oracle["population_excess_risk"]["estimate"].as_f64().unwrap() > 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, oa) = evaluate(MINIMAL, &[]);
    let (b, ob) = evaluate(MINIMAL, &["--format", "csv"]);
    assert!(oa.status.success() && ob.status.success());
    let ra = std::fs::read(a.path().join("out/rounds.csv")).unwrap();
    let rb = std::fs::read(b.path().join("out/rounds.csv")).unwrap();
    assert_eq!(ra, rb);
    assert!(!b.path().join("out/summary.json").exists());
}

#[test]
fn thread_cap_does_not_change_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GRID5);
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("out{threads}"));
        let status = bin()
            .env("WILDRIFF_THREADS", threads)
            .args(["evaluate", "--format", "csv", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        files.push(std::fs::read(out.join("rounds.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let bad = bin()
        .env("WILDRIFF_THREADS", "zero")
        .args(["evaluate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("bad"))
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
}

#[test]
fn grid_of_five_gives_five_bounds() {
    let (dir, output) = evaluate(GRID5, &[]);
    assert!(output.status.success());
    let summary = read_json(&dir.path().join("out/summary.json"));
    let bounds = summary["bounds"].as_array().unwrap();
    assert_eq!(bounds.len(), 5);
    let rhos: Vec<f64> = bounds.iter().map(|b| b["rho"].as_f64().unwrap()).collect();
    assert_eq!(rhos, vec![0.1, 0.5, 1.0, 2.0, 5.0]);
    for b in bounds {
        let sum = b["mean_opt_tilde"].as_f64().unwrap()
            + b["mean_opt_check"].as_f64().unwrap()
            + b["deviation"].as_f64().unwrap()
            + b["pilot_proxy"].as_f64().unwrap();
        let fixed = b["fixed_design_bound"].as_f64().unwrap();
        assert!((sum - fixed).abs() <= 1e-12 * fixed.abs().max(1.0));
    }
    // 3 rounds per grid value.
    assert_eq!(summary["rounds"].as_array().unwrap().len(), 15);
}

#[test]
fn summary_matches_schema() {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/summary.schema.json");
    let schema = read_json(&schema_path);
    let validator = jsonschema::validator_for(&schema).unwrap();
    for config in [MINIMAL, GRID5] {
        let (dir, output) = evaluate(config, &[]);
        assert!(output.status.success());
        let summary = read_json(&dir.path().join("out/summary.json"));
        let errors: Vec<String> = validator.iter_errors(&summary).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
    let tuned = r#"{
        "data": {"experiment": "exp1", "n": 300, "seed": 4},
        "trainer": {"name": "fourier_ridge"},
        "evaluation": {"K": 4, "K1": 2, "rho": {"mode": "tuned"}},
        "oracle": {"n_mc": 500}
    }"#;
    let (dir, output) = evaluate(tuned, &[]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let summary = read_json(&dir.path().join("out/summary.json"));
    assert!(validator.is_valid(&summary));
    assert!(summary["bounds"][0]["radius_estimate"].is_object());
}

#[test]
fn sweep_with_one_grid_value_matches_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("sweep"))
        .status()
        .unwrap();
    assert!(status.success());
    let rows = read_json(&dir.path().join("sweep/sweep.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);

    // A sweep cell evaluates with seed = data seed.
    let (edir, output) = evaluate(MINIMAL, &["--seed", "4"]);
    assert!(output.status.success());
    let summary = read_json(&edir.path().join("out/summary.json"));
    let b = &summary["bounds"][0];
    assert_eq!(rows[0]["bound"], b["wild_optimism_bound"]);
    assert_eq!(rows[0]["fixed_design_bound"], b["fixed_design_bound"]);
    let oracle = read_json(&edir.path().join("out/oracle.json"));
    assert_eq!(
        rows[0]["oracle_excess_risk"],
        oracle["population_excess_risk"]["estimate"]
    );

    let csv = std::fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn seed_override_changes_rounds() {
    let (a, _) = evaluate(MINIMAL, &["--seed", "1"]);
    let (b, _) = evaluate(MINIMAL, &["--seed", "2"]);
    let ra = std::fs::read(a.path().join("out/rounds.csv")).unwrap();
    let rb = std::fs::read(b.path().join("out/rounds.csv")).unwrap();
    assert_ne!(ra, rb);
    let summary = read_json(&a.path().join("out/summary.json"));
    assert_eq!(summary["config"]["data"]["seed"], 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let usage = bin().arg("frobnicate").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));

    let bad = write_config(
        dir.path(),
        r#"{"data": {"experiment": "exp1"}, "trainer": {"name": "tree"}}"#,
    );
    let status = bin()
        .args(["evaluate", "--out", "x", "--config"])
        .arg(&bad)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Constant responses leave nothing to tune against.
    let mut text = String::from("x,y\n");
    for i in 0..50 {
        text.push_str(&format!("{},1.0\n", i as f64 / 50.0));
    }
    std::fs::write(dir.path().join("const.csv"), text).unwrap();
    let tuned = write_config(
        dir.path(),
        &format!(
            r#"{{"data": {{"path": {:?}}}, "trainer": {{"name": "tree"}},
                "evaluation": {{"K": 3, "K1": 2, "rho": {{"mode": "tuned"}}}}}}"#,
            dir.path().join("const.csv")
        ),
    );
    let status = bin()
        .args(["evaluate", "--config"])
        .arg(&tuned)
        .arg("--out")
        .arg(dir.path().join("o"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));

    let verify = bin()
        .args(["verify", "decay", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(verify.status.code(), Some(0));
    let result = read_json(&dir.path().join("verify_decay.json"));
    assert_eq!(result["pass"], true);
}

#[test]
fn csv_dataset_source() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("x,y\n");
    for i in 0..200 {
        let x = (i as f64 + 0.5) / 200.0;
        text.push_str(&format!(
            "{x},{}\n",
            (2.0 * std::f64::consts::PI * x).sin() + 0.1 * ((i * 7919) % 13) as f64 / 13.0
        ));
    }
    std::fs::write(dir.path().join("data.csv"), text).unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"data": {{"path": {:?}}}, "trainer": {{"name": "fourier_ridge"}},
                "evaluation": {{"K": 2, "K1": 1, "rho": {{"mode": "fixed_grid", "grid": [1.0]}}}}}}"#,
            dir.path().join("data.csv")
        ),
    );
    let out = dir.path().join("out");
    let output = bin()
        .args(["evaluate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("summary.json").exists());
    assert!(!out.join("oracle.json").exists());
}
