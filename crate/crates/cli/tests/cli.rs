//! End-to-end runs of the `cantor` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const ODOMETER: &str = r#"{"kind": "odometer", "bases": [2]}"#;

fn cantor(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cantor")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cantor(&args).0
}

fn towers_config(words: &str) -> String {
    format!(r#"{{"system": {ODOMETER}, "seed": 1, "operation": {{"kind": "towers", "base": {{"radius": 2, "words": {words}}}}}}}"#)
}

fn tsdg_config(radius: usize, base: &str) -> String {
    format!(
        r#"{{"system": {ODOMETER}, "seed": 4, "operation": {{"kind": "tsdg", "base": {{"radius": {radius}, "words": {base}}},
        "l": 4, "coefficient_radius": 2, "h": 0.75, "window_length": 2000}}}}"#
    )
}

#[test]
fn towers_table_has_one_row_of_height_16() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "t.json", &towers_config(r#"["00000", "00001"]"#));
    let out = d.path().join("out");
    assert_eq!(run("towers", &cfg, &out, &[]), 0);
    let csv = fs::read_to_string(out.join("towers.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows, vec!["0,16,0..15,0.0625,1"]);
}

#[test]
fn compare_with_empty_a_passes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "c.json",
        &format!(r#"{{"system": {ODOMETER}, "seed": 1, "operation": {{"kind": "compare",
            "a": {{"radius": 0, "words": []}}, "b": {{"radius": 0, "words": ["1"]}}, "window": 2}}}}"#),
    );
    let out = d.path().join("out");
    assert_eq!(run("compare", &cfg, &out, &[]), 0);
    assert_eq!(fs::read_to_string(out.join("witness.json")).unwrap().trim(), "[]");
}

#[test]
fn failed_comparison_exits_1() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "c.json",
        &format!(r#"{{"system": {ODOMETER}, "seed": 1, "operation": {{"kind": "compare",
            "a": {{"radius": 0, "words": ["0"]}}, "b": {{"radius": 1, "words": ["111"]}}, "window": 8}}}}"#),
    );
    let out = d.path().join("out");
    assert_eq!(run("compare", &cfg, &out, &[]), 1);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("subequivalence,witness,\"none at radius 1"), "{report}");
}

#[test]
fn invalid_configs_exit_2_without_outputs() {
    let d = tempfile::tempdir().unwrap();
    let cases = [
        ("malformed.json", "{\"system\": ".to_string(), "towers"),
        ("unknown.json", towers_config(r#"["00000"]"#).replacen("\"seed\"", "\"colour\": 1, \"seed\"", 1), "towers"),
        ("noseed.json", towers_config(r#"["00000"]"#).replace("\"seed\": 1,", ""), "towers"),
        ("wrongop.json", towers_config(r#"["00000"]"#), "groupoid"),
        ("badword.json", towers_config(r#"["0000"]"#), "towers"),
    ];
    for (name, body, sub) in cases {
        let cfg = write(d.path(), name, &body);
        let out = d.path().join(format!("out-{name}"));
        assert_eq!(run(sub, &cfg, &out, &[]), 2, "{name}");
        assert!(!out.exists(), "{name} left outputs behind");
    }
    let missing = d.path().join("absent.json");
    assert_eq!(run("towers", &missing, &d.path().join("o"), &[]), 2);
}

#[test]
fn computation_errors_exit_3() {
    let d = tempfile::tempdir().unwrap();
    // height-8 towers are too short for L = 4
    let cfg = write(d.path(), "s.json", &tsdg_config(1, r#"["000"]"#));
    let out = d.path().join("out");
    assert_eq!(run("tsdg", &cfg, &out, &[]), 3);
    assert!(!out.exists());
}

#[test]
fn reports_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.json", &tsdg_config(3, r#"["0000000", "0000001"]"#));
    let (o1, o2) = (d.path().join("o1"), d.path().join("o2"));
    assert_eq!(run("tsdg", &cfg, &o1, &[]), 0);
    assert_eq!(run("tsdg", &cfg, &o2, &[]), 0);
    for f in ["report.csv", "report.json", "tsdg.csv"] {
        assert_eq!(fs::read(o1.join(f)).unwrap(), fs::read(o2.join(f)).unwrap(), "{f}");
    }
    let o3 = d.path().join("o3");
    assert_eq!(run("tsdg", &cfg, &o3, &["--seed", "99", "--window-length", "1500"]), 0);
    let echo = fs::read_to_string(o3.join("report.json")).unwrap();
    assert!(echo.contains("\"seed\": 99") && echo.contains("\"window_length\": 1500"));
}

#[test]
fn radius_override_for_system() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "s.json",
        r#"{"system": {"kind": "substitution", "rules": {"a": "ab", "b": "a"}}, "seed": 1, "operation": {"kind": "system"}}"#,
    );
    let out = d.path().join("out");
    assert_eq!(run("system", &cfg, &out, &["--radius", "1"]), 0);
    let csv = fs::read_to_string(out.join("system.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn suite_on_empty_directory() {
    let d = tempfile::tempdir().unwrap();
    let configs = d.path().join("configs");
    fs::create_dir(&configs).unwrap();
    let out = d.path().join("out");
    assert_eq!(cantor(&["suite", configs.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    assert_eq!(fs::read_to_string(out.join("aggregate.csv")).unwrap(), "config,operation,exit_code,checks,failed,message\n");
}

#[test]
fn suite_isolates_failures() {
    let d = tempfile::tempdir().unwrap();
    let configs = d.path().join("configs");
    fs::create_dir(&configs).unwrap();
    write(&configs, "a_good.json", &towers_config(r#"["00000", "00001"]"#));
    write(&configs, "b_bad.json", "not json");
    write(&configs, "c_good.json", &towers_config(r#"["00000"]"#));
    let out = d.path().join("out");
    assert_eq!(cantor(&["suite", configs.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 1);
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let codes: Vec<&str> = agg.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(codes, vec!["0", "2", "0"]);
    assert!(out.join("c_good").join("towers.csv").exists());
}

#[test]
fn acceptance_suite_passes() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance");
    let d = tempfile::tempdir().unwrap();
    let (code, stdout) = cantor(&["suite", dir.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
}

#[test]
fn config_fuzz_seeds_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/config_json");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        assert!(cantor_cli::parse_config(&text).is_ok(), "{}", p.display());
        n += 1;
    }
    assert!(n > 0);
}
