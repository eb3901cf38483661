use std::path::Path;
use std::process::{Command, Output};

use brace_core::canonical::example_one;
use brace_core::economy::EconomySpec;

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brace-lab"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_example(dir: &Path) -> String {
    let path = dir.join("ex1.json");
    std::fs::write(&path, EconomySpec::from_economy(&example_one(0.05)).to_json().unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_writes_clearing_table() {
    let dir = tempfile::tempdir().unwrap();
    let econ = write_example(dir.path());
    let out = lab(dir.path(), &["solve", &econ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("solve.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("good,price"));
    assert!(lines[0].ends_with("seed,config_hash"));
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("A,0.333333333,"));
    assert!(dir.path().join("solve.json").exists());
}

#[test]
fn empty_attack_has_zero_gain() {
    let dir = tempfile::tempdir().unwrap();
    let econ = write_example(dir.path());
    let attack = dir.path().join("empty.json");
    std::fs::write(&attack, r#"{"kind":"empty","principal":"P"}"#).unwrap();
    let out = lab(dir.path(), &["attack", &econ, attack.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("attack.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], &["P", "0", "0", "0"]);
    assert_eq!(row[5], "0");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = lab(d.path(), &["--seed", "9", "bounds", "--kind", "welfare", "--count", "2", "-p", "n=15"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "welfare-bound.csv"), read(&b, "welfare-bound.csv"));
    assert_eq!(read(&a, "welfare-bound.json"), read(&b, "welfare-bound.json"));
}

#[test]
fn malformed_economy_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"goods":[{"name":"A","capacity":1}],"identities":[{"id":"1","principal":"P","endowment":[{"bundle":[1,0],"prob":1.0}],"acceptable":[],"order":[]}],"delta":0.1}"#).unwrap();
    let out = lab(dir.path(), &["solve", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
    let missing = lab(dir.path(), &["solve", "no-such-file.json"]);
    assert!(!missing.status.success());
}

#[test]
fn empty_corpus_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("corpus");
    let out = lab(&target, &["corpus", "--count", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let entries = std::fs::read_dir(&target).map(|r| r.count()).unwrap_or(0);
    assert_eq!(entries, 0);
}

#[test]
fn generated_corpus_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["--seed", "3", "corpus", "--count", "2", "--ns", "10,12"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 2);
    let spec = EconomySpec::from_json(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
    assert_eq!(spec.identities.len(), 12);
    assert!(spec.seed.is_some());
}
