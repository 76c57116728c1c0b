//! Drives the `trb` binary end to end on a tiny configuration.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3
out_dir = "unused"
retrain = false
horizon_steps = 10
perturbations = [{ kind = "remove_road" }, { kind = "heading_offset" }]

[data]
source = "generate"
train = { scenes = 8, future_len = 10, id_prefix = "train-" }
test = { scenes = 4, future_len = 10, id_prefix = "test-" }

[[models]]
name = "cv"
kind = "cv"

[[models]]
name = "rnn"
kind = "recurrent"
model = { layers = 1, hidden = 4, modes = 2, future_len = 10 }
train = { epochs = 1, batch_size = 4 }
"#;

fn trb(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    Command::new(env!("CARGO_BIN_EXE_trb"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("TRB_SEED")
        .env_remove("TRB_JOBS")
        .env_remove("TRB_FORMAT")
        .output()
        .unwrap()
}

#[test]
fn print_config_echoes_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = trb(dir.path(), &["bench", "--print-config", "--seed", "41"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 41"), "{text}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn zero_jobs_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = trb(dir.path(), &["bench", "--jobs", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_trb"))
        .args(["bench", "--config", "/nonexistent/trb.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_without_checkpoints_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = trb(dir.path(), &["eval"]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_then_bench_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = trb(dir.path(), &["generate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train = std::fs::read_to_string(dir.path().join("out/train.jsonl")).unwrap();
    assert!(train.starts_with(r#"{"format":"trb-scenes","version":1,"scenes":8}"#));

    let out = trb(dir.path(), &["bench", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("model,training,condition,min_ade,count,failures,delta,relative_pct"));
    // cv and rnn, each clean plus two perturbations
    assert_eq!(csv.lines().count(), 1 + 6);
    for f in ["report.json", "report.md", "summary.txt", "results.csv", "checkpoints/rnn__original.ckpt"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }

    // eval reuses the checkpoint and reproduces the report
    let before = std::fs::read(dir.path().join("out/report.json")).unwrap();
    let out = trb(dir.path(), &["eval"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(dir.path().join("out/report.json")).unwrap(), before);

    std::fs::remove_file(dir.path().join("out/report.md")).unwrap();
    let out = trb(dir.path(), &["report", "--format", "md"]);
    assert!(out.status.success());
    let md = String::from_utf8(out.stdout).unwrap();
    assert_eq!(md, std::fs::read_to_string(dir.path().join("out/report.md")).unwrap());
}
