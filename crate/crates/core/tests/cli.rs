use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cqi::config::KEYS;

fn cqi(args: &[&str]) -> Output {
    cqi_in(args, None)
}

fn cqi_in(args: &[&str], output_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cqi"));
    cmd.args(args).env_remove("CQI_OUTPUT_ROOT");
    if let Some(root) = output_root {
        cmd.env("CQI_OUTPUT_ROOT", root);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn shipped(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_lists_every_config_key() {
    let o = cqi(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for k in KEYS {
        assert!(text.contains(k.name), "missing {}", k.name);
    }
}

#[test]
fn shipped_configs_validate() {
    for name in ["cqi_reward_opt.cfg", "cqi_size_opt.cfg", "pyeatt_best.cfg"] {
        let o = cqi(&["validate-config", &shipped(name)]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(stdout(&o).contains("[method]"));
    }
}

#[test]
fn bad_values_are_usage_errors_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", "[method]\nalpha = 1.5\n");
    let o = cqi(&["validate-config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("method.alpha"), "{}", stderr(&o));

    let o = cqi(&["validate-config", &shipped("cqi_reward_opt.cfg"), "--set", "env.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("env.no_such_key"));

    let o = cqi(&["validate-config", tmp.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = cqi(&["train", "--bogus-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_export_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = cqi(&[
        "train",
        "--config",
        &shipped("cqi_reward_opt.cfg"),
        "--set",
        "harness.trials=1",
        "--set",
        "harness.train_steps=5000",
        "--set",
        "harness.eval_steps=1000",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("metric,mean,stddev,n"));
    for f in ["config.snapshot", "summary.csv", "trial_00/metrics.csv", "trial_00/tree_final.txt", "trial_00/curve.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    let tree = out.join("trial_00/tree_final.txt");
    let o = cqi(&["export-tree", tree.to_str().unwrap(), "--format", "dot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("digraph"));
    let o = cqi(&["export-tree", tree.to_str().unwrap()]);
    assert_eq!(stdout(&o), fs::read_to_string(&tree).unwrap());

    let o = cqi(&["eval", tree.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("size,episodes,avg_reward"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cqi_in(
        &["train", "--seed", "3", "--set", "harness.trials=1", "--set", "harness.train_steps=2000", "--set", "harness.eval_steps=500"],
        Some(tmp.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let run = tmp.path().join("cqi-seed3");
    assert!(run.join("trial_00/tree_final.txt").is_file());
    let snapshot = fs::read_to_string(run.join("config.snapshot")).unwrap();
    assert!(snapshot.contains("seed = 3"));
}

#[test]
fn sweep_writes_one_row_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cqi(&[
        "sweep",
        "--grid",
        "method.split_thresh_max=1,100",
        "--set",
        "harness.trials=1",
        "--set",
        "harness.train_steps=2000",
        "--set",
        "harness.eval_steps=500",
        "--output",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
}
