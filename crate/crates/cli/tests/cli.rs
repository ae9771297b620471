use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn harp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SCENARIO: &str = "preset = \"wan\"\nseed = 3\n[[sweep]]\nfile_count = 4\nfile_size_bytes = 1073741824\n";

fn manifest(dir: &Path) -> PathBuf {
    let mut text = String::from("# two classes\n");
    for i in 0..6 {
        text += &format!("data/big{i} 1073741824\n");
    }
    for i in 0..200 {
        text += &format!("data/small{i} 1048576\n");
    }
    write(dir, "manifest.txt", &text)
}

#[test]
fn cost_table_first_row() {
    let o = harp(&["cost-table"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].contains("10%") && rows[0].contains("50%") && rows[0].contains(" 90 x Thr0"), "{}", rows[0]);
    assert!(rows[8].contains(" 18 x Thr0"));
}

#[test]
fn generate_history_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "wan.toml", "preset = \"wan\"\n");
    let out = dir.path().join("h.jsonl");
    let o = harp(&["generate-history", s(&sc), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("wrote 216 entries"));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 216);
    let o = harp(&["generate-history", s(&sc), "--out", s(&out), "--repeats", "5"]);
    assert!(stdout(&o).contains("wrote 1080 entries"));
}

#[test]
fn missing_or_bad_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.jsonl");
    let o = harp(&["generate-history", "/nonexistent/scenario.toml", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let bad = write(dir.path(), "bad.toml", "preset = \"moon\"\n");
    assert_eq!(harp(&["generate-history", s(&bad), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(harp(&["cost-table", "--bogus"]).status.code(), Some(2));
}

#[test]
fn compare_single_strategy_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "wan.toml", SCENARIO);
    let m = manifest(dir.path());
    let args = ["compare", "--scenario", s(&sc), "--manifest", s(&m), "--strategies", "go", "--seed", "9"];
    let a = harp(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("go"));
    assert_eq!(stdout(&harp(&args)), text);
    let bad = harp(&["compare", "--scenario", s(&sc), "--manifest", s(&m), "--strategies", "warp"]);
    assert_eq!(bad.status.code(), Some(2));
    let needs_history = harp(&["compare", "--scenario", s(&sc), "--manifest", s(&m), "--strategies", "harp"]);
    assert_eq!(needs_history.status.code(), Some(2));
}

#[test]
fn tuner_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "wan.toml", SCENARIO);
    let m = manifest(dir.path());
    let h = dir.path().join("h.jsonl");
    assert!(harp(&["generate-history", s(&sc), "--out", s(&h), "--repeats", "2"]).status.success());

    let o = harp(&["optimize", "--history", s(&h), "--manifest", s(&m), "--scenario", s(&sc), "--probe", "given:4,2,1=3e9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("chunk 0 Tiny") && text.contains("chunk 1 Large"), "{text}");
    assert!(text.contains("params ("), "{text}");
    assert_eq!(
        harp(&["optimize", "--history", s(&h), "--manifest", s(&m), "--scenario", s(&sc), "--probe", "given:4,2=1"]).status.code(),
        Some(2)
    );

    let o = harp(&["inspect", "--history", s(&h), "--manifest", s(&m), "--scenario", s(&sc)]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().all(|l| l.starts_with('{') && l.contains("\"coefficients\"")));

    let tl = dir.path().join("timeline.csv");
    let dl = dir.path().join("decisions.csv");
    let args = [
        "simulate", "--scenario", s(&sc), "--manifest", s(&m), "--history", s(&h), "--online", "--traffic", "heavy",
        "--timeline", s(&tl), "--decisions", s(&dl),
    ];
    let o = harp(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("harp+online aggregate"));
    assert!(fs::read_to_string(&tl).unwrap().starts_with("t_s,throughput_bps,flows\n"));
    assert!(fs::read_to_string(&dl).unwrap().starts_with("interval,t_s,chunk,"));
}

#[test]
fn simulate_fixed_plan_and_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "wan.toml", SCENARIO);
    let m = manifest(dir.path());
    let plan = write(dir.path(), "plan.txt", "4 1 16\n8 2 1\n");
    let o = harp(&["simulate", "--scenario", s(&sc), "--manifest", s(&m), "--plan", s(&plan)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("aggregate"));
    let short = write(dir.path(), "short.txt", "4 1 16\n");
    assert_eq!(harp(&["simulate", "--scenario", s(&sc), "--manifest", s(&m), "--plan", s(&short)]).status.code(), Some(2));
    // Online tuning without the tuner is a domain error.
    let o = harp(&["simulate", "--scenario", s(&sc), "--manifest", s(&m), "--strategy", "go", "--online"]);
    assert_eq!(o.status.code(), Some(1));
}
