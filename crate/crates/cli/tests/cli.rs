use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn avac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("exp.cfg");
    fs::write(
        &path,
        "experiment.traces = cs, dt\n\
         experiment.trace_length = 2000\n\
         experiment.grid_w = 1, 40, 80, 120\n\
         experiment.grid_b = 1, 10, 40, 80\n\
         experiment.output_dir = out\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(avac(&[]).status.code(), Some(1));
    assert_eq!(avac(&["bogus"]).status.code(), Some(1));
    assert_eq!(avac(&["train"]).status.code(), Some(1));
    assert_eq!(
        avac(&["train", "--config", "x", "--degree", "4"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(avac(&["--help"]).status.code(), Some(0));
    assert_eq!(avac(&["--version"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.cfg");
    assert_eq!(
        avac(&["train", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "experiment.interval = 0\n").unwrap();
    let out = avac(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out_file = dir.path().join("t.trace");
    let out = avac(&[
        "gen-trace",
        "--profile",
        "nope",
        "--length",
        "10",
        "--seed",
        "1",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown profile"));
}

#[test]
fn gen_trace_writes_a_parseable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mm.trace");
    let out = avac(&[
        "gen-trace",
        "--profile",
        "mm",
        "--length",
        "500",
        "--seed",
        "7",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trace = avac_core::parse_trace(&path).unwrap();
    assert_eq!(trace.len(), 500);
    assert_eq!(trace.reads(), 250);

    let again = dir.path().join("again.trace");
    avac(&[
        "gen-trace",
        "--profile",
        "mm",
        "--length",
        "500",
        "--seed",
        "7",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn train_eval_sweep_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("out");

    let out = avac(&["train", "--config", &cfg, "--seed", "3", "--degree", "3"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dataset rows: 48"), "{stdout}");
    for f in [
        "dataset.csv",
        "model_pg.json",
        "model_eg.json",
        "train_summary.json",
    ] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let first = fs::read(out_dir.join("dataset.csv")).unwrap();
    avac(&["train", "--config", &cfg, "--seed", "3", "--degree", "3"]);
    assert_eq!(first, fs::read(out_dir.join("dataset.csv")).unwrap());

    let eval_dir = dir.path().join("eval");
    let out = avac(&[
        "eval",
        "--config",
        &cfg,
        "--models",
        out_dir.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["report.json", "report.csv", "intervals.csv"] {
        assert!(eval_dir.join(f).is_file(), "{f}");
    }
    let intervals = fs::read_to_string(eval_dir.join("intervals.csv")).unwrap();
    assert_eq!(intervals.lines().count(), 1 + 2 * 2);

    let fixed_dir = dir.path().join("fixed");
    let out = avac(&[
        "eval",
        "--config",
        &cfg,
        "--models",
        out_dir.to_str().unwrap(),
        "--no-tuner",
        "--out",
        fixed_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report = fs::read_to_string(fixed_dir.join("report.csv")).unwrap();
    for line in report.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3..5], cols[5..7], "{line}");
    }

    let out = avac(&[
        "sweep",
        "--config",
        &cfg,
        "--trace",
        "mm",
        "--out",
        dir.path().join("sweep").to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grid = fs::read_to_string(dir.path().join("sweep").join("sweep_mm.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 12);

    let out = avac(&[
        "eval",
        "--config",
        &cfg,
        "--models",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
