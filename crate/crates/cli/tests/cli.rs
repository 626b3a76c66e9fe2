use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pirsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pirsim"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Four-event feature file: two clutter rows, two human rows.
fn toy_features(path: &Path) {
    let header = pirsim::features::feature_header().join(",");
    let mut s = header + "\n";
    for (i, (label, base)) in [("clutter", 0.0), ("clutter", 0.5), ("human", 10.0), ("human", 10.5)]
        .into_iter()
        .enumerate()
    {
        let vals: Vec<String> = (0..69).map(|k| format!("{}", base + 0.01 * k as f64)).collect();
        s.push_str(&format!("evt_{i},{label},{}\n", vals.join(",")));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn help_lists_subcommands() {
    let t = TempDir::new().unwrap();
    let o = pirsim(t.path(), &["--help"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for sub in ["simulate", "featurize", "evaluate", "inspect", "--seed", "--jobs", "--config", "--out"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn unknown_flag_is_usage_error() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&pirsim(t.path(), &["simulate", "--bogus"])), 4);
}

#[test]
fn empty_simulation_is_valid() {
    let t = TempDir::new().unwrap();
    let o = pirsim(t.path(), &["simulate", "--human", "0", "--animal", "0", "--clutter", "0", "--out", "ds"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(t.path().join("ds/manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(v["events"].as_array().unwrap().len(), 0);
    assert_eq!(v["seed"], 0);
}

#[test]
fn bad_config_exits_2() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("bad.toml"), "[simulation\nx = 1\n").unwrap();
    let o = pirsim(t.path(), &["--config", "bad.toml", "simulate"]);
    assert_eq!(code(&o), 2);
    assert!(!stderr(&o).is_empty());
    let o = pirsim(t.path(), &["--set", "no_such.key=1", "simulate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_twice_gives_identical_manifest() {
    let t = TempDir::new().unwrap();
    let counts = ["--human", "1", "--animal", "1", "--clutter", "1", "--seed", "9"];
    let a = [&["simulate"][..], &counts, &["--out", "a"]].concat();
    let b = [&["--jobs", "1", "simulate"][..], &counts, &["--out", "b"]].concat();
    assert_eq!(code(&pirsim(t.path(), &a)), 0);
    assert_eq!(code(&pirsim(t.path(), &b)), 0);
    let a = fs::read(t.path().join("a/manifest.json")).unwrap();
    let b = fs::read(t.path().join("b/manifest.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn featurize_reports_truncated_event() {
    let t = TempDir::new().unwrap();
    let o = pirsim(t.path(), &["simulate", "--human", "1", "--clutter", "1", "--out", "ds"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let victim = t.path().join("ds/events/evt_00001.csv");
    let text = fs::read_to_string(&victim).unwrap();
    fs::write(&victim, &text[..text.len() / 2]).unwrap();
    let o = pirsim(t.path(), &["featurize", "--dataset", "ds"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("evt_00001.csv"), "{}", stderr(&o));
}

#[test]
fn featurize_then_inspect() {
    let t = TempDir::new().unwrap();
    let o = pirsim(t.path(), &["simulate", "--human", "1", "--clutter", "1", "--seed", "4", "--out", "ds"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = pirsim(t.path(), &["featurize", "--dataset", "ds"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(t.path().join("ds/features.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], pirsim::features::feature_header().join(","));
    assert_eq!(lines[0].split(',').count(), 71);

    let o = pirsim(
        t.path(),
        &["inspect", "ds/events/evt_00000.csv", "--thresholds", "0.5,0.5,0.5,0.5", "--out", "plots"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("reconstruction SNR"));
    assert!(text.contains("truth table"));
    assert!(t.path().join("plots/evt_00000.inspect.json").exists());
    let overlay = fs::read_to_string(t.path().join("plots/evt_00000.overlay.csv")).unwrap();
    assert_eq!(overlay.lines().next().unwrap(), "n,A,A_recon,B,B_recon,C,C_recon,D,D_recon");
    assert_eq!(overlay.lines().count(), 1025);
}

#[test]
fn inspect_empty_file_exits_3() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("empty.csv"), "").unwrap();
    let o = pirsim(t.path(), &["inspect", "empty.csv", "--thresholds", "1,1,1,1"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn evaluate_toy_file_with_two_folds() {
    let t = TempDir::new().unwrap();
    toy_features(&t.path().join("toy.csv"));
    let o = pirsim(t.path(), &["evaluate", "--features", "toy.csv", "--mode", "e8", "--folds", "2", "--grid", "quick"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Minimum Accuracy %") && text.contains("Average Accuracy %"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("toy.e8.report.json")).unwrap()).unwrap();
    assert_eq!(report["folds"], 2);
    assert_eq!(report["seed"], 0);
    assert!(t.path().join("toy.e8.report.txt").exists());
}

#[test]
fn evaluate_with_too_few_examples_exits_4() {
    let t = TempDir::new().unwrap();
    toy_features(&t.path().join("toy.csv"));
    let o = pirsim(t.path(), &["evaluate", "--features", "toy.csv", "--mode", "c60", "--folds", "3", "--grid", "quick"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn evaluate_missing_file_exits_3() {
    let t = TempDir::new().unwrap();
    let o = pirsim(t.path(), &["evaluate", "--features", "nope.csv", "--mode", "e8"]);
    assert_eq!(code(&o), 3);
}
