mod common;

use std::path::Path;
use std::process::{Command, Output};

use dropout_mlp::cli::model_file::ModelFile;
use dropout_mlp::network::ModelParams;
use dropout_mlp::trainer::TrainConfig;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dropout-mlp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn pid() -> String {
    common::pid_path().display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Value of `metric` in the given column of a metrics table.
fn metric(report: &str, name: &str, column: usize) -> String {
    let line = report
        .lines()
        .find(|l| l.split_whitespace().next() == Some(name))
        .unwrap_or_else(|| panic!("no {name} row in\n{report}"));
    line.split_whitespace().nth(column).unwrap().to_string()
}

fn zero_model_file(dir: &Path) -> std::path::PathBuf {
    let config = TrainConfig::default();
    let path = dir.join("zero.txt");
    ModelFile::new(&config, ModelParams::zeros(&config.spec))
        .unwrap()
        .save(&path)
        .unwrap();
    path
}

#[test]
fn train_writes_model_and_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    let csv = dir.path().join("h.csv");
    let o = run(&[
        "train",
        "--data",
        &pid(),
        "--seed",
        "1",
        "--epochs",
        "3",
        "--out",
        s(&model),
        "--history-csv",
        s(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    for name in ["accuracy", "sensitivity", "specificity", "mse"] {
        assert!(report.contains(name), "missing {name}");
    }
    assert!(model.exists());
    let history = std::fs::read_to_string(&csv).unwrap();
    let mut lines = history.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,train_loss,train_acc,val_loss,val_acc")
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn train_defaults_run_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    let o = run(&["train", "--data", &pid(), "--seed", "1", "--out", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(ModelFile::load(&model).unwrap().fingerprint.epochs, 500);
}

#[test]
fn same_invocation_writes_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    for out in [&a, &b] {
        let o = run(&[
            "train",
            "--data",
            &pid(),
            "--seed",
            "4",
            "--epochs",
            "5",
            "--out",
            s(out),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn zero_epochs_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train",
        "--data",
        &pid(),
        "--epochs",
        "0",
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("epochs"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "epochs = 2\nlearnig_rate = 0.1\n").unwrap();
    let o = run(&[
        "train",
        "--data",
        &pid(),
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("learnig_rate"));
}

#[test]
fn config_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# short run\nepochs = 2\nseed = 9\nbatch_size = 32\n").unwrap();
    let model = dir.path().join("m.txt");
    let o = run(&[
        "train",
        "--data",
        &pid(),
        "--config",
        s(&cfg),
        "--seed",
        "10",
        "--out",
        s(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fp = ModelFile::load(&model).unwrap().fingerprint;
    assert_eq!((fp.epochs, fp.seed, fp.batch_size), (2, 10, 32));
}

#[test]
fn unreadable_data_fails() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2,3,4,5,6,7,8,1\n1,2,x,4,5,6,7,8,0\n").unwrap();
    let o = run(&[
        "train",
        "--data",
        s(&bad),
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn eval_reproduces_training_report_on_validation_split() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    let t = run(&[
        "train",
        "--data",
        &pid(),
        "--seed",
        "2",
        "--epochs",
        "10",
        "--out",
        s(&model),
    ]);
    assert!(t.status.success());
    let e = run(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        &pid(),
        "--subset",
        "validation",
    ]);
    assert!(e.status.success(), "{}", stderr(&e));
    let (train_report, eval_report) = (stdout(&t), stdout(&e));
    for name in [
        "accuracy",
        "sensitivity",
        "specificity",
        "mse",
        "true_pos",
        "false_pos",
        "true_neg",
        "false_neg",
    ] {
        assert_eq!(
            metric(&train_report, name, 2),
            metric(&eval_report, name, 1),
            "{name}"
        );
    }
    let e = run(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        &pid(),
        "--subset",
        "train",
    ]);
    assert_eq!(
        metric(&train_report, "accuracy", 1),
        metric(&stdout(&e), "accuracy", 1)
    );
}

#[test]
fn eval_zero_model_is_all_positive() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model_file(dir.path());
    let o = run(&["eval", "--model", s(&model), "--data", &pid()]);
    assert!(o.status.success());
    let report = stdout(&o);
    assert_eq!(metric(&report, "accuracy", 1), "0.34896");
    assert_eq!(metric(&report, "sensitivity", 1), "1");
    assert_eq!(metric(&report, "specificity", 1), "0");
    assert_eq!(metric(&report, "true_pos", 1), "268");
}

#[test]
fn eval_rejects_other_versions_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model_file(dir.path());
    let text = std::fs::read_to_string(&model).unwrap();

    let v2 = dir.path().join("v2.txt");
    std::fs::write(&v2, text.replace("format_version 1", "format_version 2")).unwrap();
    let o = run(&["eval", "--model", s(&v2), "--data", &pid()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains('2') && err.contains('1'), "{err}");

    let broken = dir.path().join("broken.txt");
    std::fs::write(&broken, text.replacen("0.0000000000000000e0", "zero", 1)).unwrap();
    let o = run(&["eval", "--model", s(&broken), "--data", &pid()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line "), "{}", stderr(&o));
}

#[test]
fn predict_single_and_batch() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model_file(dir.path());
    let o = run(&[
        "predict",
        "--model",
        s(&model),
        "--input",
        "6,148,72,35,0,33.6,0.627,50",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "0.69314718056,1\n");

    let batch = dir.path().join("batch.csv");
    std::fs::write(
        &batch,
        "a,b,c,d,e,f,g,h\n1,2,3,4,5,6,7,8\n0,0,0,0,0,0,0,0\n\n9,9,9,9,9,9,9,9\n",
    )
    .unwrap();
    let o = run(&["predict", "--model", s(&model), "--batch", s(&batch)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn predict_checks_arity() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model_file(dir.path());
    let o = run(&["predict", "--model", s(&model), "--input", "1,2,3,4,5,6,7"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("expected 8 fields"));
}

#[test]
fn data_stats_on_pid() {
    let o = run(&["data-stats", "--data", &pid()]);
    assert!(o.status.success());
    let report = stdout(&o);
    assert!(report.contains("classes: 268 positive / 500 negative"));
    let means: Vec<f64> = report
        .lines()
        .skip(1)
        .take(8)
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    let printed = [3.8, 120.9, 69.1, 20.5, 79.8, 32.0, 0.5, 33.2];
    for (m, p) in means.iter().zip(printed) {
        assert!((m - p).abs() <= 0.1, "{m} vs {p}");
    }
}

#[test]
fn data_stats_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(!run(&["data-stats", "--data", s(&empty)]).status.success());

    let constant = dir.path().join("constant.csv");
    std::fs::write(
        &constant,
        "5,1,2,3,4,5,6,7,1\n5,2,3,4,5,6,7,8,0\n5,3,4,5,6,7,8,9,0\n",
    )
    .unwrap();
    let o = run(&["data-stats", "--data", s(&constant)]);
    assert!(o.status.success());
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let cells: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cells, ["pregnancies", "5", "0", "5", "5"]);
}

#[test]
fn compare_two_seeds_structure() {
    let o = run(&[
        "compare",
        "--data",
        &pid(),
        "--seeds",
        "1,2",
        "--epochs",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    let lines: Vec<&str> = report.lines().collect();
    // Header, 4 seed rows, 2 mean rows, verdict.
    assert_eq!(lines.len(), 8);
    assert_eq!(lines.iter().filter(|l| l.starts_with("mean")).count(), 2);
    assert!(lines[7].starts_with("gap change with dropout: "));
}

#[test]
fn compare_without_dropout_reports_no_change() {
    let o = run(&[
        "compare",
        "--data",
        &pid(),
        "--seeds",
        "1,2",
        "--epochs",
        "2",
        "--layers",
        "dense:64:elu,dropout:0,dense:32:elu,dropout:0,dense:1:softplus",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).ends_with("gap change with dropout: 0 (unchanged)\n"));
}

#[test]
fn compare_fails_only_when_every_seed_fails() {
    let o = run(&[
        "compare",
        "--data",
        &pid(),
        "--seeds",
        "1,2",
        "--input-width",
        "7",
        "--layers",
        "dense:1:softplus",
    ]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(
        err.contains("seed 1 failed") && err.contains("seed 2 failed"),
        "{err}"
    );

    let o = run(&["compare", "--data", &pid(), "--seeds", "1"]);
    assert!(!o.status.success());
}

#[test]
fn help_lists_commands() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    for cmd in ["train", "eval", "predict", "data-stats", "compare"] {
        assert!(stdout(&o).contains(cmd));
    }
}

#[test]
fn compare_five_seeds_at_defaults_reduces_gap() {
    let o = run(&["compare", "--data", &pid(), "--seeds", "1,2,3,4,5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    assert_eq!(
        report.lines().filter(|l| !l.starts_with("seed")).count(),
        13
    );
    assert!(report.trim_end().ends_with("(reduced)"), "{report}");
}
