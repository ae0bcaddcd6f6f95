use std::path::Path;
use std::process::{Command, Output};

fn cvgebd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvgebd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"{
  "channels": 8, "window": 2, "epochs": 2, "decay_epochs": [1],
  "train_videos": 6, "test_videos": 3, "num_frames": 30,
  "width": 32, "height": 32, "event_spacing": 8
}"#;

#[test]
fn dump_config_prints_defaults_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let o = cvgebd(dir.path(), &["--dump-config", "--seed", "9"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["epochs"], 30);
    assert_eq!(v["channels"], 32);
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"chanels": 8}"#).unwrap();
    let o = cvgebd(dir.path(), &["--config", "bad.json", "synth"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_value_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"channels": 6}"#).unwrap();
    let o = cvgebd(dir.path(), &["--config", "bad.json", "train"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = cvgebd(dir.path(), &["inspect", "nope.cgv"]);
    assert_eq!(o.status.code(), Some(3));
    let o = cvgebd(dir.path(), &["eval"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn corrupt_container_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.cgv"), b"CGV1 not really").unwrap();
    let o = cvgebd(dir.path(), &["inspect", "x.cgv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.json"), SMALL).unwrap();
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "small.json"];
        full.extend_from_slice(args);
        let o = cvgebd(d, &full);
        assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };

    run(&["synth"]);
    assert!(d.join("data/train/annotations.json").exists());
    let first = std::fs::read_dir(d.join("data/test"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "cgv"))
        .unwrap();
    let first = first.to_str().unwrap();

    let info = run(&["inspect", first]);
    assert!(info.contains("32x32"), "{info}");
    run(&["encode", first, "--out", "copy.cgv"]);
    assert!(d.join("copy.cgv").exists());

    let log = run(&["train"]);
    assert!(log.contains("epoch"));
    assert!(d.join("runs/model.ckpt").exists());
    let lines = std::fs::read_to_string(d.join("runs/train_log.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);

    run(&["infer"]);
    let preds = std::fs::read_to_string(d.join("runs/predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 3);

    let table = run(&["eval"]);
    assert!(table.contains("0.05"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("runs/report.json")).unwrap()).unwrap();
    assert!(report["avg_f1"].is_number());
}
