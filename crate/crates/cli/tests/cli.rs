//! Exit codes and small command round trips through the `asc` binary.

use std::path::Path;
use std::process::{Command, Output};

use asc_core::data::{parse_manifest, SCENES};
use asc_core::fusion::ScoreMatrix;

fn asc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asc")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("meta.csv");
    let mut text = String::from("filename\tscene_label\n");
    for (i, scene) in SCENES.iter().enumerate() {
        text.push_str(&format!("audio/{scene}-city-{i}-0-a.wav\t{scene}\n"));
    }
    text.push_str("not a row\n");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(asc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(asc(&["train", "--topology", "resnet", "--out", "x"]).status.code(), Some(1));
    assert_eq!(asc(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "topolgy = \"vgg\"\n").unwrap();
    let out = asc(&["--config", p(&cfg), "folds", "--out", p(&dir.path().join("f.tsv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("topolgy"));
}

#[test]
fn missing_input_exits_with_two() {
    let out = asc(&["eval", "--manifest", "/nonexistent/meta.csv", "--scores", "/nonexistent/s.tsv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn one_hot_scores_evaluate_to_full_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let meta = manifest(dir.path());
    let rows = parse_manifest(&std::fs::read_to_string(&meta).unwrap(), false).unwrap().rows;
    let ids: Vec<String> = rows.iter().map(|r| r.segment_id()).collect();
    let scores =
        rows.iter().map(|r| (0..SCENES.len()).map(|c| if c == r.label { 5.0 } else { -1.0 }).collect()).collect();
    let path = dir.path().join("nested/scores.tsv");
    ScoreMatrix::new("oracle", ids, scores).unwrap().write(&path).unwrap();

    let out = asc(&["eval", "--manifest", p(&meta), "--scores", p(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.lines().any(|l| l.starts_with("Average") && l.trim_end().ends_with("100.0")), "{report}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 12"), "skipped row is reported");

    // A vote over one system reproduces its decisions.
    let votes = dir.path().join("votes.tsv");
    let out = asc(&["vote", "--scores", p(&path), "--fallback", p(&path), "--out", p(&votes)]);
    assert!(out.status.success());
    let out = asc(&["eval", "--manifest", p(&meta), "--predictions", p(&votes)]);
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("100.0"), "{report}");
}
