use std::path::Path;
use std::process::{Command, Output};

use fixhead::experiment::read_metrics_csv;

fn fixhead(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fixhead"));
    cmd.args(args).env_remove("FIXHEAD_THREADS");
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let o = fixhead(&[], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        &["train", "--bogus"][..],
        &["train", "--epochs", "many"],
        &["train", "--head", "dense"],
        &["sweep-alpha", "--head", "learned"],
        &["frobnicate"],
    ] {
        let o = fixhead(args, None);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixhead(
        &[
            "train",
            "--data",
            "idx",
            "--images",
            "/nonexistent/i",
            "--labels",
            "/nonexistent/l",
        ],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("/nonexistent/i"));
}

#[test]
fn check_grad_passes() {
    let o = fixhead(&["check-grad", "--seed", "1"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("max_rel_error=").map(str::to_string))
        .unwrap();
    assert!(line.parse::<f64>().unwrap() < 1e-4);
}

#[test]
fn hadamard_on_zero_noise_blobs_has_no_val_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixhead(
        &[
            "train", "--head", "hadamard", "--data", "blobs", "--epochs", "1", "--sigma", "0",
        ],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_metrics_csv(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].val_error, 0.0);
    assert!(dir.path().join("model.fxhc").exists());
    assert!(stdout(&o).contains("head=hadamard"));
}

#[test]
fn saved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = fixhead(
        &[
            "train", "--epochs", "2", "--seed", "9", "--alpha", "3", "--widths", "16",
        ],
        Some(&a),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let config = a.join("config.txt");
    let o = fixhead(&["train", "--config", config.to_str().unwrap()], Some(&b));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(a.join("metrics.csv")).unwrap(),
        std::fs::read(b.join("metrics.csv")).unwrap()
    );
    let text = std::fs::read_to_string(b.join("config.txt")).unwrap();
    assert!(text.contains("alpha=3\n") && text.contains("widths=16\n"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.txt");
    std::fs::write(&config, "epochs=1\nlearning_rate=0.1\n").unwrap();
    let o = fixhead(
        &["train", "--config", config.to_str().unwrap()],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rate"));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_fixhead"))
        .args(["check-grad", "--cases", "1"])
        .env("FIXHEAD_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generated_idx_data_trains() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = fixhead(
        &[
            "gen-data",
            "--classes",
            "3",
            "--dim",
            "6",
            "--per-class",
            "30",
        ],
        Some(&data),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "train-images.idx",
        "train-labels.idx",
        "val-images.idx",
        "val-labels.idx",
        "config.txt",
    ] {
        assert!(data.join(f).exists(), "{f}");
    }
    let p = |f: &str| data.join(f).to_str().unwrap().to_string();
    let run = dir.path().join("run");
    let o = fixhead(
        &[
            "train",
            "--data",
            "idx",
            "--images",
            &p("train-images.idx"),
            "--labels",
            &p("train-labels.idx"),
            "--val-images",
            &p("val-images.idx"),
            "--val-labels",
            &p("val-labels.idx"),
            "--epochs",
            "3",
        ],
        Some(&run),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_metrics_csv(run.join("metrics.csv")).unwrap().len(), 3);
}

#[test]
fn compare_writes_paired_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixhead(
        &[
            "compare",
            "--epochs",
            "2",
            "--pairs",
            "2",
            "--per-class",
            "40",
            "--head",
            "hadamard",
        ],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "learned-seed0.csv",
        "fixed-seed1.csv",
        "deltas-seed0.csv",
        "summary.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",true")));
    let fixed = read_metrics_csv(dir.path().join("fixed-seed0.csv")).unwrap();
    assert!(fixed[0].alpha.is_some());
    let learned = read_metrics_csv(dir.path().join("learned-seed0.csv")).unwrap();
    assert!(learned[0].alpha.is_none());
}

#[test]
fn sweep_writes_one_csv_per_arm() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixhead(
        &[
            "sweep-alpha",
            "--epochs",
            "2",
            "--per-class",
            "40",
            "--values",
            "0.5,2",
        ],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "alpha-0.5.csv",
        "alpha-2.csv",
        "alpha-train.csv",
        "sweep.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let baseline = dir.path().join("baseline.txt");
    std::fs::write(&baseline, "64,32,0.5\n").unwrap();
    let o = fixhead(
        &[
            "bench",
            "--n",
            "64",
            "--c",
            "32",
            "--reps",
            "30",
            "--baseline",
            baseline.to_str().unwrap(),
        ],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(report.starts_with("n,c,median_ns_dense,median_ns_fwht,speedup\n64,32,"));
    let samples = std::fs::read_to_string(dir.path().join("bench-samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 31);

    let o = fixhead(&["bench", "--n", "48", "--c", "8"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
}
