use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_treesym"))
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn train_attack_and_convert_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let data = data_dir();
    let dd = data.to_str().unwrap();
    let m = model.to_str().unwrap();

    let out = run(&["train", "--preset", "breast_cancer", "--data-dir", dd, "--out", m]);
    let summary = stdout_json(&out);
    assert_eq!(summary["mode"], "default");
    assert!(summary["test_accuracy"].as_f64().unwrap() > 0.8);

    let test = data.join("breast_cancer.test");
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "attack", "--model", m, "--test", test.to_str().unwrap(), "--n-features", "10",
        "--label-map", "2:0,4:1", "--attack", "exact,cube", "--norm", "linf", "--n-samples", "20",
        "--out", report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    let blocks = report["classifiers"][0]["attacks"].as_array().unwrap();
    assert_eq!(blocks.len(), 2);
    assert_eq!(blocks[0]["attack"], "exact");
    assert_eq!(blocks[0]["adversarial_accuracy"], 0.0);

    let out = run(&["report", "--input", report_path.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("dataset,classifier,attack,"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn defended_model_file_round_trips_through_attack() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zk.json");
    let dd = data_dir();
    let out = run(&[
        "train", "--preset", "diabetes", "--data-dir", dd.to_str().unwrap(), "--mode", "zk-two",
        "--out", model.to_str().unwrap(),
    ]);
    assert_eq!(stdout_json(&out)["mode"], "zk-two");
    let out = run(&[
        "attack", "--model", model.to_str().unwrap(),
        "--test", dd.join("diabetes.test").to_str().unwrap(), "--n-features", "8",
        "--label-map", "-1:0,1:1", "--attack", "hsja", "--n-samples", "5",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["classifiers"][0]["classifier"], "zk-two");
}

#[test]
fn experiment_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let dd = data_dir();
    let cfg = format!(
        r#"
mode = "zk-single"
n_eval_samples = 10
format = "csv"

[dataset]
train = "{0}/breast_cancer.train"
test = "{0}/breast_cancer.test"
n_features = 10
label_map = "2:0,4:1"

[train]
n_rounds = 4
max_depth = 6

[[attacks]]
kind = "signopt"
config = {{ norm = "linf", max_queries = 2000 }}
"#,
        dd.display()
    );
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = run(&["defend-eval", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().starts_with("breast_cancer,zk-single,signopt:linf,"));
}

#[test]
fn fragmentation_and_invariance_subcommands() {
    let dd = data_dir();
    for cmd in ["fragmentation", "invariance"] {
        let out = run(&[cmd, "--preset", "breast_cancer", "--data-dir", dd.to_str().unwrap()]);
        let r = stdout_json(&out);
        let cs = r["classifiers"].as_array().unwrap();
        assert_eq!(cs.len(), 2);
        assert!(cs[1]["split_count"].as_u64() > cs[0]["split_count"].as_u64());
        assert!(cs[0]["disagree"].is_u64());
    }
}

#[test]
fn failures_print_one_json_error_line() {
    let out = run(&["train", "--data", "/nonexistent/a", "--test", "/nonexistent/b", "--n-features", "3",
        "--label-map", "0:0,1:1", "--out", "/tmp/never.json"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");

    let out = run(&["attack", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "usage");

    let out = run(&["defend-eval", "--preset", "diabetes", "--mode", "pk-group"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "missing_image_shape");
}
