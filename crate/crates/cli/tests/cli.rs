use std::path::Path;
use std::process::{Command, Output};

fn phonsal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonsal"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn phonsal")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn missing_corpus_is_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"corpus":{"directory":{"root":"/nonexistent/audio-mnist"}},"models":[{"arch":"TDNN-1"}]}"#,
    );
    let out = phonsal(&["--config", &cfg, "synth"]);
    assert!(!out.status.success());
    let err = stderr_json(&out);
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("/nonexistent/audio-mnist"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"corpus":{"synth":{"n_speakers":2,"takes":2}},"models":[],"colour":"blue"}"#);
    let out = phonsal(&["--config", &cfg, "synth"]);
    assert!(!out.status.success());
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("colour"));
}

#[test]
fn tiny_synthetic_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"corpus":{"synth":{"n_speakers":2,"takes":2}},"models":[{"arch":"TDNN-1","epochs":1,"batch":4}]}"#,
    );
    let out_dir = dir.path().join("out");
    let out_s = out_dir.to_string_lossy().into_owned();

    let out = phonsal(&["--config", &cfg, "--out", &out_s, "--jobs", "1", "synth"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["recordings"], 2 * 10 * 2);
    assert!(out_dir.join("manifest.json").is_file());

    let out = phonsal(&["--config", &cfg, "--out", &out_s, "--seed", "0", "report"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report/report.json")).unwrap()).unwrap();
    assert_eq!(report["speakers"], 2);
    assert_eq!(report["models"][0]["model"], "TDNN-1");
    assert_eq!(report["method_consistency"][0]["model"], "TDNN-1");
    for f in ["method_consistency.csv", "model_consistency.csv", "speaker_correlation.csv", "global_pid.csv", "global_pid.svg"] {
        assert!(out_dir.join("report").join(f).is_file(), "{f}");
    }
    assert!(out_dir.join("saliency/TDNN-1_tao.csv").is_file());
}
