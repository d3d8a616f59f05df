use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adcraft::harness::{emit_report, load_report};
use adcraft::policy::PolicyParams;

const TINY: &str = r#"{
    "steps": 3,
    "batch_prompts": 3,
    "eval_prompts": 3,
    "order": 1,
    "optimizer": "adam",
    "learning_rate": 0.3,
    "checkpoint_every": 2,
    "predictor": {"train_rows": 600, "epochs": 1}
}"#;

fn adcraft(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adcraft"))
        .arg("--config")
        .arg(dir.join("config.json"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.json"), TINY).unwrap();
    dir
}

fn assert_ok(out: &Output) {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = setup();
    let d = dir.path();

    assert_ok(&adcraft(d, &["gen-env", "--rows", "500"]));
    for f in ["vocab.json", "oracle.json", "dataset.csv"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(d.join("dataset.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.ends_with(",click,conversion"), "{header}");
    assert_eq!(csv.lines().count(), 501);

    let out = adcraft(d, &["train-predictor"]);
    assert_ok(&out);
    assert!(d.join("predictor.json").is_file());
    assert!(String::from_utf8_lossy(&out.stdout).contains("AUC"));

    assert_ok(&adcraft(d, &["--trace", "train", "--model", "RELATE"]));
    let curves = fs::read_to_string(d.join("curves.csv")).unwrap();
    assert_eq!(
        curves.lines().next().unwrap(),
        "step,structural,ctcvr,diversity,semantic,total,kl,clip_frac,compliance"
    );
    assert_eq!(curves.lines().count(), 1 + 4);
    assert!(d.join("ckpt_2.json").is_file());
    assert!(d.join("metrics.json").is_file());
    assert!(d.join("trace").read_dir().unwrap().count() > 0);

    let ckpt: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("ckpt_3.json")).unwrap()).unwrap();
    for key in ["order", "vocab_size", "logits", "step"] {
        assert!(ckpt.get(key).is_some(), "{key}");
    }
    let (params, step) = PolicyParams::load(&d.join("ckpt_3.json")).unwrap();
    assert_eq!(step, 3);
    let copy = d.join("copy.json");
    params.save(&copy, step).unwrap();
    assert_eq!(fs::read(&copy).unwrap(), fs::read(d.join("ckpt_3.json")).unwrap());

    assert_ok(&adcraft(d, &["eval", "--checkpoint", d.join("ckpt_3.json").to_str().unwrap()]));
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert!(eval["delta_ctcvr"].is_number());
}

#[test]
fn ablate_and_report_agree_on_exit_code() {
    let dir = setup();
    let d = dir.path();
    let ablate = adcraft(d, &["ablate", "--seeds", "0"]);
    let code = ablate.status.code();
    assert!(matches!(code, Some(0 | 2)), "{ablate:?}");
    for f in ["report.json", "report.txt", "seed_0/RELATE/curves.csv", "seed_0/Model1/curves.csv"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let text = fs::read_to_string(d.join("report.txt")).unwrap();
    let report = load_report(&d.join("report.json")).unwrap();
    assert!(text.contains(&report.config_hash));
    assert!(text.contains("seeds: 0"));
    assert_eq!(adcraft(d, &["report"]).status.code(), code);
}

#[test]
fn report_exit_code_tracks_comparisons() {
    let dir = setup();
    let d = dir.path();
    assert!(matches!(adcraft(d, &["ablate", "--seeds", "1"]).status.code(), Some(0 | 2)));
    let mut report = load_report(&d.join("report.json")).unwrap();

    for c in &mut report.comparisons {
        c.pass = true;
    }
    emit_report(&report, d).unwrap();
    assert_eq!(adcraft(d, &["report"]).status.code(), Some(0));

    report.comparisons[3].pass = false;
    emit_report(&report, d).unwrap();
    assert_eq!(adcraft(d, &["report"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = setup();
    let d = dir.path();
    fs::write(d.join("config.json"), r#"{"credit": {"alpha": -2}}"#).unwrap();
    let out = adcraft(d, &["train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("credit.alpha"));

    fs::write(d.join("config.json"), TINY).unwrap();
    let out = adcraft(d, &["eval", "--checkpoint", d.join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = adcraft(d, &["report", "--report", d.join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
