use std::path::Path;
use std::process::{Command, Output};

fn qadebias(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qadebias")).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["--version"], &["synth", "--help"]] {
        let out = qadebias(dir.path(), args);
        assert!(out.status.success(), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["bogus"][..], &[], &["synth"], &["evaluate", "--data", "d.jsonl", "--out", "m.json"]] {
        let out = qadebias(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn missing_input_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = qadebias(dir.path(), &["cache-logits", "--model", "teacher.ckpt", "--data", "d.jsonl", "--out", "c.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("teacher.ckpt"), "{err}");
    assert!(!dir.path().join("c.jsonl").exists());
}

#[test]
fn evaluate_predictions_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = qadebias(dir.path(), &["synth", "--n", "5", "--seed", "3", "--out", "d.jsonl"]);
    assert!(out.status.success());
    let data = qadebias::corpus::read_dataset(&dir.path().join("d.jsonl")).unwrap();
    let preds: std::collections::BTreeMap<_, _> =
        data.iter().take(4).map(|e| (e.id.clone(), e.answers[0].text.clone())).collect();
    std::fs::write(dir.path().join("p.json"), serde_json::to_string(&preds).unwrap()).unwrap();

    let out = qadebias(dir.path(), &["evaluate", "--data", "d.jsonl", "--pred", "p.json", "--out", "m.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(m["exact_match"], 80.0);
    assert_eq!(m["missing_predictions"], 1);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("m.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "evaluate");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
}

#[test]
fn report_needs_something_to_render() {
    let dir = tempfile::tempdir().unwrap();
    let out = qadebias(dir.path(), &["report", "--out", "r.txt"]);
    assert_eq!(out.status.code(), Some(1));
}
