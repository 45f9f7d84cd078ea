//! End-to-end runs of the `anytime` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("anytime-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn anytime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anytime")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = anytime(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `words` split on whitespace, followed by `rest`.
fn argv<'a>(words: &'a str, rest: &[&'a str]) -> Vec<&'a str> {
    words.split_whitespace().chain(rest.iter().copied()).collect()
}

#[test]
fn preset_test_writes_the_rejection_time() {
    let dir = scratch("preset");
    let out = ok(&["test", "--preset", "mean_sd_beta", "--seed", "7", "--out", s(&dir)]);
    let summary = json(&dir.join("summary.json"));
    let at = summary["rejected_at"].as_u64().expect("the MeanSd alternative rejects");
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["steps"].as_u64(), Some(at));
    assert!(String::from_utf8_lossy(&out.stdout).contains(&format!("rejected at t = {at}")));
    // one path row and one JSON line per step
    assert_eq!(fs::read_to_string(dir.join("path.csv")).unwrap().lines().count() as u64, at + 1);
    assert_eq!(fs::read_to_string(dir.join("steps.jsonl")).unwrap().lines().count() as u64, at);
}

#[test]
fn continue_flag_consumes_the_whole_horizon() {
    let dir = scratch("continue");
    ok(&["test", "--preset", "mean_sd_beta", "--seed", "7", "--horizon", "120", "--continue", "--out", s(&dir)]);
    let summary = json(&dir.join("summary.json"));
    assert_eq!((summary["rejected_at"].as_u64(), summary["steps"].as_u64()), (Some(24), Some(120)));
}

#[test]
fn malformed_csv_reports_the_line() {
    let dir = scratch("badcsv");
    let csv = dir.join("x.csv");
    fs::write(&csv, "x\n0.1\n0.2\nabc\n0.3\n").unwrap();
    let out = anytime(&argv(
        "test --functional mean --null 0.5 --family bounded_identifiable --range 0:1",
        &["--data", s(&csv), "--out", s(&dir.join("o"))],
    ));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("abc"), "{err}");
}

#[test]
fn observations_can_come_from_stdin() {
    let dir = scratch("stdin");
    let mut child = Command::new(env!("CARGO_BIN_EXE_anytime"))
        .args(["test", "--functional", "mean", "--null", "0.9", "--family", "bounded_identifiable", "--range", "0:1"])
        .args(["--data", "-", "--out", s(&dir)])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let rows: String = (0..300).map(|i| format!("{}\n", 0.1 + 0.2 * ((i * 7 % 10) as f64 / 10.0))).collect();
    child.stdin.take().unwrap().write_all(rows.as_bytes()).unwrap();
    assert!(child.wait().unwrap().success());
    let summary = json(&dir.join("summary.json"));
    assert!(summary["rejected_at"].is_u64(), "{summary}");
}

#[test]
fn alpha_outside_the_unit_interval_is_a_config_error() {
    let dir = scratch("alpha");
    for alpha in ["1.5", "0", "-0.1"] {
        let out = anytime(&["test", "--preset", "mean_sd_beta", &format!("--alpha={alpha}"), "--out", s(&dir)]);
        assert_eq!(out.status.code(), Some(2), "alpha {alpha}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    }
    assert!(!dir.join("summary.json").exists());
}

#[test]
fn unknown_preset_lists_the_available_ones() {
    let out = anytime(&["experiment", "--preset", "nope", "--out", s(&scratch("nope"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for p in ["mean_sd_beta", "var_cvar_beta", "ar1_coeff"] {
        assert!(err.contains(p), "{err}");
    }
}

/// A one-point grid turns the confidence sequence into the point test of
/// that value: the candidate leaves C_t exactly when the test rejects.
#[test]
fn one_point_confseq_is_the_point_test() {
    let dir = scratch("duality");
    let common = "--functional mean --null 0.45 --family bounded_identifiable --range 0:1 \
                  --generator beta:2:5 --horizon 300 --seed 11 --continue";
    let cs = dir.join("cs");
    let tt = dir.join("tt");
    ok(&argv(&format!("confseq {common} --grid 0.45:0.45:1"), &["--out", s(&cs)]));
    ok(&argv(&format!("test {common}"), &["--out", s(&tt)]));
    let rejected_at = json(&tt.join("summary.json"))["rejected_at"].as_u64().expect("0.45 is rejected");
    let csv = fs::read_to_string(cs.join("confseq.csv")).unwrap();
    let masks: Vec<(u64, String)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[f.len() - 1].to_string())
        })
        .collect();
    assert_eq!(masks[0], (0, "1".to_string()), "C_0 is the full grid");
    for (t, mask) in &masks {
        assert_eq!(mask == "1", *t < rejected_at, "t = {t}");
    }
}

#[test]
fn confseq_starts_from_the_full_grid() {
    let dir = scratch("full");
    ok(&argv(
        "confseq --functional quantile:0.5 --null 0.3 --family bounded_identifiable --range 0:1 \
         --grid 0.05:0.95:10 --generator beta:2:5 --horizon 100 --seed 4",
        &["--out", s(&dir)],
    ));
    let csv = fs::read_to_string(dir.join("confseq.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    assert!(first.starts_with("0,10,") && first.ends_with(",1111111111"), "{first}");
    let summary = json(&dir.join("summary.json"));
    assert!(summary.is_object());
}

#[test]
fn montecarlo_with_one_replication() {
    let dir = scratch("mc");
    ok(&["montecarlo", "--preset", "mean_sd_beta", "--reps", "1", "--horizons", "100", "--out", s(&dir)]);
    let mc = json(&dir.join("montecarlo.json"));
    let f = mc["summary"]["rejection"][0]["frequency"].as_f64().unwrap();
    assert!(f == 0.0 || f == 1.0);
    assert_eq!(mc["summary"]["underpowered"], true);
    assert_eq!(fs::read_to_string(dir.join("montecarlo.csv")).unwrap().lines().count(), 2);
}

#[test]
fn experiment_writes_the_bundle_layout() {
    let dir = scratch("experiment");
    ok(&["experiment", "--preset", "var_cvar_beta", "--out", s(&dir)]);
    let run = dir.join("runs").join("var_cvar_beta").join("2");
    for f in ["path.csv", "surface.csv", "confseq.csv", "summary.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert!(json(&run.join("summary.json"))["rejected_at"].is_u64());
}

/// config.txt records every resolved option, so it reproduces the run.
#[test]
fn rerun_from_config_txt_is_byte_identical() {
    let dir = scratch("rerun");
    let first = dir.join("first");
    let second = dir.join("second");
    ok(&["test", "--preset", "ar1_coeff", "--seed", "5", "--horizon", "400", "--continue", "--out", s(&first)]);
    ok(&["test", "--config", s(&first.join("config.txt")), "--out", s(&second)]);
    for f in ["path.csv", "steps.jsonl"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    let strip = |p: &Path| {
        let mut v = json(&p.join("summary.json"));
        v["config"].as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(strip(&first), strip(&second));
}
