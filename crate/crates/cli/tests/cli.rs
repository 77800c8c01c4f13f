use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
seed = 11
metric = "ms_deepmutation"

[paths]
model = "out/model.json"
train = "out/train.csv"
test = "out/test.csv"
out_dir = "out"

[sampling]
mode = "uniform"
sn = 40

[regression]
bootstrap_resamples = 100

[evaluate]
sn = 20

[synth]
n_train = 600
n_test = 600
n_clusters = 12
"#;

fn fdrcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdrcast"))
        .current_dir(dir)
        .arg("--config")
        .arg(dir.join("cfg.toml"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = fdrcast(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error(out: &Output) -> Value {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&out.stderr)));
    v["error"].clone()
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), config).unwrap();
    dir
}

fn pipeline(dir: &Path, threads: &str) {
    ok(dir, &["synth"]);
    ok(dir, &["build", "--threads", threads]);
    ok(dir, &["assess", "--threads", threads]);
    ok(dir, &["evaluate", "--threads", threads]);
    ok(dir, &["report"]);
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn pipeline_writes_assessment() {
    let w = workspace(SMALL);
    ok(w.path(), &["synth"]);
    let built = ok(w.path(), &["build"]);
    assert_eq!(built["command"], "build");
    assert!(built["summary"]["records"].as_u64().unwrap() > 0);
    let a = ok(w.path(), &["assess"]);
    let s = &a["summary"];
    assert!(s["pi_low"].as_f64().unwrap() <= s["fdr_hat"].as_f64().unwrap());
    assert!(s["fdr_hat"].as_f64().unwrap() <= s["pi_high"].as_f64().unwrap());
    let out = w.path().join("out/ms_deepmutation");
    assert!(out.join("assessment.json").exists());
    assert!(out.join("archive.jsonl").exists());
}

#[test]
fn missing_mutant_is_a_digest_mismatch() {
    let w = workspace(SMALL);
    ok(w.path(), &["synth"]);
    ok(w.path(), &["build"]);
    let pool = w.path().join("out/pool");
    let victim = fs::read_dir(&pool)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("mutant_"))
        .unwrap();
    fs::remove_file(victim).unwrap();
    let e = error(&fdrcast(w.path(), &["assess"]));
    assert_eq!(e["kind"], "digest_mismatch");
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let a = workspace(SMALL);
    let b = workspace(SMALL);
    pipeline(a.path(), "1");
    pipeline(b.path(), "4");
    let (ta, tb) = (tree(&a.path().join("out")), tree(&b.path().join("out")));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{} differs", k.display());
    }
}

#[test]
fn out_of_range_config_names_the_field() {
    let w = workspace(&SMALL.replace("sn = 40", "sn = 40\ntheta = 0.9"));
    let e = error(&fdrcast(w.path(), &["synth"]));
    assert_eq!(e["kind"], "config");
    assert_eq!(e["field"], "sampling.theta");
}

#[test]
fn mistyped_config_names_the_field() {
    let w = workspace(&SMALL.replace("sn = 40", "sn = \"forty\""));
    let e = error(&fdrcast(w.path(), &["synth"]));
    assert_eq!(e["field"], "sampling.sn");
}

#[test]
fn unknown_config_key_is_rejected() {
    let w = workspace(&SMALL.replace("sn = 40", "sn = 40\nthetta = 0.1"));
    let e = error(&fdrcast(w.path(), &["synth"]));
    assert_eq!(e["kind"], "config");
    assert!(e["message"].as_str().unwrap().contains("thetta"), "{e}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let w = workspace(SMALL);
    let out = fdrcast(w.path(), &["synth", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error(&out)["kind"], "usage");
}

#[test]
fn assess_without_build_fails_cleanly() {
    let w = workspace(SMALL);
    ok(w.path(), &["synth"]);
    let out = fdrcast(w.path(), &["assess"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error(&out)["message"].is_string());
}
