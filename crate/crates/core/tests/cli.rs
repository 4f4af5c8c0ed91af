mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use migraph::io::save_bag_csv;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn migk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_migk"))
        .args(args)
        .current_dir(dir)
        .env("MIGK_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture() -> TempDir {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    save_bag_csv(&separable_dataset(&mut rng, 10, 3), dir.path().join("bags.csv")).unwrap();
    dir
}

const FAST: [&str; 4] = ["--gamma-scales", "0.5,1", "--c", "1,10"];

#[test]
fn cv_writes_result_summary_and_timing() {
    let dir = fixture();
    let mut args = vec!["cv", "--kernel", "miGraph", "--data", "bags.csv", "--seed", "3", "--out", "run.json"];
    args.extend(FAST);
    let o = migk(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("over 100 folds"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(json["folds"].as_array().unwrap().len(), 100);
    assert_eq!(json["mean"].as_f64().unwrap(), 100.0);
    assert!(dir.path().join("run.csv").exists());
    assert!(dir.path().join("run.timing.json").exists());

    let again = migk(&args, dir.path());
    let digest = |o: &Output| stdout(o).lines().find(|l| l.starts_with("digest")).unwrap().split(' ').nth(1).unwrap().to_owned();
    assert_eq!(digest(&o), digest(&again));
}

#[test]
fn compare_reports_the_t_test() {
    let dir = fixture();
    let mut args = vec!["compare", "--a", "miGraph", "--b", "MI-Kernel", "--data", "bags.csv", "--folds", "5", "--repeats", "2"];
    args.extend(FAST);
    let o = migk(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("paired t-test"));
    assert!(text.contains("t = "));
    assert!(text.contains("significant at 0.05"));
}

#[test]
fn train_then_predict_round_trip() {
    let dir = fixture();
    let mut args = vec!["train", "--kernel", "MI-Kernel", "--data", "bags.csv", "--model", "m.bin"];
    args.extend(FAST);
    let o = migk(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = migk(&["predict", "--model", "m.bin", "--train", "bags.csv", "--data", "bags.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bag_id,label,prediction"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], f[2], "{line}");
    }
}

#[test]
fn gram_and_loo_run() {
    let dir = fixture();
    let o = migk(&["gram", "--kernel", "MIGraph", "--data", "bags.csv", "--out", "k.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(dir.path().join("k.csv")).unwrap();
    assert!(rows.lines().count() >= 20);

    let mut args = vec!["loo", "--kernel", "miGraph", "--data", "bags.csv", "--out", "loo.json"];
    args.extend(FAST);
    let o = migk(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("over 20 folds"));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = fixture();
    std::fs::write(
        dir.path().join("exp.cfg"),
        "kernel = mikernel\ndata = bags.csv\nfolds = 4\nrepeats = 1\ngamma_scales = 1\nc = 1\n",
    )
    .unwrap();
    let o = migk(&["--config", "exp.cfg", "cv", "--out", "r.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("MI-Kernel accuracy"));
    assert!(stdout(&o).contains("over 4 folds"));
}

#[test]
fn validate_flags_bad_files() {
    let dir = fixture();
    assert!(migk(&["validate", "bags.csv"], dir.path()).status.success());
    std::fs::write(dir.path().join("bad.csv"), "bag_id,label,f1\nb1,+1,0.5\nb1,-1,0.2\n").unwrap();
    let o = migk(&["validate", "bad.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(dir.path().join("ragged.csv"), "bag_id,label,f1\nb1,+1,0.5,9\n").unwrap();
    assert_eq!(migk(&["validate", "ragged.csv"], dir.path()).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = fixture();
    assert_eq!(migk(&["cv", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(migk(&["cv", "--kernel", "nope", "--data", "bags.csv"], dir.path()).status.code(), Some(1));
    assert_eq!(migk(&["cv", "--kernel", "miGraph", "--data", "missing.csv"], dir.path()).status.code(), Some(1));
    assert_eq!(migk(&["convert", "--format", "arff", "x", "--out", "y"], dir.path()).status.code(), Some(1));
}
