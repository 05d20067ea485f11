//! End-to-end tests of the installed binary: artifact round-trips,
//! cross-command consistency, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_it2cfnn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        stdout(out),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn line_value<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no line starting with {prefix:?} in:\n{text}"))
        .trim()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.json");
    std::fs::write(&path, "{\"max_outer\": 2, \"max_inner\": 4}\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["generate", "two-hump", "--train-noise", "lots"]).status.code(), Some(1));
    assert_eq!(run(&["bench", "box-jenkins"]).status.code(), Some(1));
    assert_eq!(run(&["bench", "series-csv", "--csv", "x.csv"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let out = run(&["predict", "--model", "/nonexistent/model.json", "--data", "/nonexistent/d.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,y\n1.0,2.0\noops,3.0\n").unwrap();
    let out = run(&["init", "--data", bad.to_str().unwrap(), "--rules", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3") && err.contains("column 1"), "unhelpful csv error: {err}");
}

#[test]
fn generate_is_deterministic_and_noise_changes_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    for sub in ["a", "b"] {
        let out = run(&["--output-dir", &path(sub), "--seed", "7", "generate", "two-hump", "--train-noise", "0.1"]);
        assert_ok(&out);
    }
    let a = std::fs::read(dir.path().join("a/train.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/train.csv")).unwrap();
    assert_eq!(a, b, "same seed must give identical bytes");

    let out = run(&["--output-dir", &path("c"), "--seed", "8", "generate", "two-hump", "--train-noise", "0.1"]);
    assert_ok(&out);
    let c = std::fs::read(dir.path().join("c/train.csv")).unwrap();
    assert_ne!(a, c, "a different seed must draw different noise");

    let header = std::fs::read_to_string(dir.path().join("a/train.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "x1,x2,y");
    assert!(dir.path().join("a/test.csv").exists());
}

#[test]
fn train_and_predict_report_the_same_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    assert_ok(&run(&["--output-dir", out_dir, "generate", "two-hump"]));
    let cfg = tiny_config(dir.path());
    let train_csv = dir.path().join("train.csv");

    let trained = run(&[
        "--output-dir",
        out_dir,
        "--config",
        &cfg,
        "train",
        "--data",
        train_csv.to_str().unwrap(),
        "--rules",
        "2",
    ]);
    assert_ok(&trained);
    let trained_out = stdout(&trained);
    let train_rmse = line_value(&trained_out, "train rmse ").to_string();

    let model = dir.path().join("model.json");
    let predicted = run(&[
        "--output-dir",
        out_dir,
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        train_csv.to_str().unwrap(),
    ]);
    assert_ok(&predicted);
    let predict_rmse = line_value(&stdout(&predicted), "rmse ").to_string();
    assert_eq!(train_rmse, predict_rmse, "train and predict must agree on the same data");

    // Predictions table: inputs + target + prediction columns, one row per sample.
    let preds = std::fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,y,y_pred");
    assert_eq!(preds.lines().count(), 351);

    // Training history uses the contracted schema.
    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(
        history.lines().next().unwrap(),
        "outer_epoch,group,inner_iter,lambda,train_rmse,val_rmse"
    );
}

#[test]
fn predict_accepts_target_free_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    assert_ok(&run(&["--output-dir", out_dir, "generate", "two-hump"]));
    let train_csv = dir.path().join("train.csv");
    assert_ok(&run(&[
        "--output-dir",
        out_dir,
        "init",
        "--data",
        train_csv.to_str().unwrap(),
        "--rules",
        "2",
    ]));

    // Strip the target column; predictions must still work, without an rmse line.
    let full = std::fs::read_to_string(&train_csv).unwrap();
    let stripped: String = full
        .lines()
        .map(|l| {
            let mut parts: Vec<&str> = l.split(',').collect();
            parts.pop();
            parts.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n");
    let inputs_csv = dir.path().join("inputs.csv");
    std::fs::write(&inputs_csv, stripped + "\n").unwrap();

    let model = dir.path().join("model.json");
    let out = run(&[
        "--output-dir",
        out_dir,
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        inputs_csv.to_str().unwrap(),
        "--out",
        "p2.csv",
    ]);
    assert_ok(&out);
    assert!(!stdout(&out).contains("rmse"), "no targets means no rmse line");
    let preds = std::fs::read_to_string(dir.path().join("p2.csv")).unwrap();
    assert_eq!(preds.lines().next().unwrap(), "x1,x2,y_pred");
}

#[test]
fn check_grad_passes_and_respects_tolerance() {
    let out = run(&["check-grad", "--rules", "2", "--inputs", "3", "--samples", "6"]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("overall max relative deviation"));
    for group in ["gamma", "center", "consequent", "beta", "delta", "type_reduction"] {
        assert!(text.contains(group), "missing group {group} in:\n{text}");
    }

    // An absurd tolerance turns finite-difference noise into a numeric failure.
    let out = run(&["check-grad", "--samples", "4", "--tolerance", "1e-30"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_writes_report_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run_bench = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "--output-dir",
            out_dir.to_str().unwrap(),
            "--config",
            &cfg,
            "--seed",
            "11",
            "bench",
            "two-hump",
            "--repetitions",
            "2",
            "--train-noise",
            "0.1",
        ]);
        assert_ok(&out);
        assert!(stdout(&out).contains("two-hump |"));
        std::fs::read(out_dir.join("two-hump_report.csv")).unwrap()
    };
    let a = run_bench("a");
    let b = run_bench("b");
    assert_eq!(a, b, "same seed and config must reproduce the report bytes");

    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(
        "train_noise,test_noise,rules,params,repetitions,failures,rmse_mean,rmse_min,rmse_max"
    ));
    assert!(dir.path().join("a/two-hump_manifest.json").exists());
    assert!(dir.path().join("a/two-hump_c0_r0_model.json").exists());
}

#[test]
fn bench_series_csv_runs_on_a_generated_series() {
    let dir = tempfile::tempdir().unwrap();
    // A noisy ramp with a seasonal wobble; enough rows for 4 lags.
    let mut csv = String::from("v\n");
    for t in 0..160 {
        let x = (t as f64) * 0.05;
        csv.push_str(&format!("{}\n", x.sin() + 0.3 * (3.1 * x).cos()));
    }
    let series = dir.path().join("series.csv");
    std::fs::write(&series, csv).unwrap();
    let cfg = tiny_config(dir.path());

    let out = run(&[
        "--output-dir",
        dir.path().join("out").to_str().unwrap(),
        "--config",
        &cfg,
        "bench",
        "series-csv",
        "--csv",
        series.to_str().unwrap(),
        "--train-rows",
        "100",
        "--rules",
        "2",
    ]);
    assert_ok(&out);
    assert!(dir.path().join("out/series-csv_report.csv").exists());
}

#[test]
fn normalized_training_round_trips_through_the_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    assert_ok(&run(&["--output-dir", out_dir, "generate", "two-hump"]));
    let cfg = tiny_config(dir.path());
    let train_csv = dir.path().join("train.csv");

    let trained = run(&[
        "--output-dir",
        out_dir,
        "--config",
        &cfg,
        "train",
        "--data",
        train_csv.to_str().unwrap(),
        "--normalize",
        "minmax",
        "--model",
        "scaled.json",
    ]);
    assert_ok(&trained);
    let train_rmse = line_value(&stdout(&trained), "train rmse ").to_string();

    let predicted = run(&[
        "--output-dir",
        out_dir,
        "predict",
        "--model",
        dir.path().join("scaled.json").to_str().unwrap(),
        "--data",
        train_csv.to_str().unwrap(),
        "--out",
        "scaled_preds.csv",
    ]);
    assert_ok(&predicted);
    // The stored scaling must reproduce original-unit errors exactly.
    assert_eq!(train_rmse, line_value(&stdout(&predicted), "rmse "));
}
