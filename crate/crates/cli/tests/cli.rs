use std::fs;
use std::path::{Path, PathBuf};

use icc_cli::{run, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

fn data(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name].iter().collect();
    path.to_string_lossy().into_owned()
}

fn icc(args: &[&str]) -> i32 {
    run(std::iter::once("icc").chain(args.iter().copied()))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn bayes_run(out: &Path, seed: &str, jobs: &str) -> i32 {
    icc(&[
        "--jobs",
        jobs,
        "bayes",
        "--input",
        &data("outbreak3.csv"),
        "--whole-series",
        "--anchor",
        "85",
        "--horizons",
        "2",
        "--burn-in",
        "500",
        "--draws",
        "200",
        "--seed",
        seed,
        "--out",
        out.to_str().unwrap(),
    ])
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn bayes_output_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(bayes_run(&a, "7", "3"), EXIT_OK);
    assert_eq!(bayes_run(&b, "7", "1"), EXIT_OK);
    assert_eq!(bayes_run(&c, "8", "3"), EXIT_OK);

    let files = dir_bytes(&a);
    let names: Vec<_> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "bayes_summary.json",
            "diagnostics.json",
            "posterior_week86.csv",
            "posterior_week87.csv",
            "trace_week86.jsonl",
            "trace_week87.jsonl"
        ]
    );
    assert_eq!(files, dir_bytes(&b));
    assert_ne!(files, dir_bytes(&c));

    let summary = read_json(&a.join("bayes_summary.json"));
    assert_eq!(summary["config"]["bayes"]["seed"], 7);
    assert_eq!(summary["targets"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(a.join("posterior_week86.csv")).unwrap();
    assert!(csv.starts_with("# config: {"));
    assert_eq!(csv.lines().nth(1), Some("cases,histogram,kde"));
}

#[test]
fn evaluate_reports_rmse_by_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let code = icc(&["evaluate", "--input", &data("outbreak1.csv"), "--whole-series", "--out", out]);
    assert_eq!(code, EXIT_OK);

    let summary = read_json(&tmp.path().join("evaluation_summary.json"));
    let one = summary["rmse_1wk"].as_f64().unwrap();
    let four = summary["rmse_4wk"].as_f64().unwrap();
    assert!((one - 1.9578900207451218).abs() < 1e-12, "{one}");
    assert!(one < four);
    assert_eq!(summary["config"]["lower_bound"], "retrospective");

    let scores = fs::read_to_string(tmp.path().join("forecast_scores.csv")).unwrap();
    assert_eq!(scores.lines().nth(1), Some("week,horizon,point,observed,abs_error,log_score"));
    // Anchors 15..=20 with every target inside weeks 13..=21.
    assert_eq!(scores.lines().count() - 2, 6 + 5 + 4 + 3);
}

#[test]
fn segment_writes_seasons() {
    let tmp = tempfile::tempdir().unwrap();
    let code = icc(&[
        "segment",
        "--input",
        &data("multi_season.csv"),
        "--split-week",
        "88",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let seasons = read_json(&tmp.path().join("seasons.json"));
    let spans: Vec<(i64, i64)> = seasons["seasons"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["first_week"].as_i64().unwrap(), s["last_week"].as_i64().unwrap()))
        .collect();
    assert_eq!(spans, [(13, 21), (25, 67), (77, 87), (88, 103)]);
    assert_eq!(seasons["config"]["season"]["split_weeks"][0], 88);
}

#[test]
fn forecast_writes_distribution_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let code = icc(&["forecast", "--input", &data("outbreak1.csv"), "--anchor", "18", "--out", out]);
    assert_eq!(code, EXIT_OK);
    let record = read_json(&tmp.path().join("forecasts.json"));
    assert_eq!(record["forecasts"].as_array().unwrap().len(), 4);
    let grid = fs::read_to_string(tmp.path().join("pmf_grid.csv")).unwrap();
    let mass: f64 = grid
        .lines()
        .skip(2)
        .filter(|l| l.starts_with("19,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-8, "{mass}");
}

#[test]
fn simulate_and_correlate_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(icc(&["simulate", "--input", &data("benchmark.scenario"), "--out", out]), EXIT_OK);
    let shape = read_json(&tmp.path().join("shape_check.json"));
    assert!(shape["shape"]["check"]["r_squared"].as_f64().unwrap() >= 0.9);
    let trajectory = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert_eq!(trajectory.lines().count(), 2 + 41);

    let code = icc(&["correlate", "--input", &data("risk_abundance.csv"), "--max-lag", "6", "--out", out]);
    assert_eq!(code, EXIT_OK);
    let table = fs::read_to_string(tmp.path().join("lagged_spearman.csv")).unwrap();
    assert_eq!(table.lines().count(), 2 + 7);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(icc(&["--help"]), EXIT_OK);
    assert_eq!(icc(&["forecast", "--bogus"]), EXIT_USAGE);
    assert_eq!(
        icc(&["evaluate", "--input", &data("outbreak1.csv"), "--bins", "0", "--out", out]),
        EXIT_USAGE
    );
    assert_eq!(icc(&["segment", "--input", "no/such/file.csv"]), EXIT_DATA);

    let bad_csv = tmp.path().join("bad.csv");
    fs::write(&bad_csv, "week,cases\n1,3\n1,4\n").unwrap();
    assert_eq!(icc(&["segment", "--input", bad_csv.to_str().unwrap()]), EXIT_DATA);

    let text = fs::read_to_string(data("benchmark.scenario"))
        .unwrap()
        .replace("dt = 0.01", "dt = 0.5")
        .replace("b1 = 2\n", "b1 = 1e300\n")
        .replace("a1 = 1.5", "a1 = 1e300");
    let scenario = tmp.path().join("blowup.scenario");
    fs::write(&scenario, text).unwrap();
    assert_eq!(
        icc(&["simulate", "--input", scenario.to_str().unwrap(), "--out", out]),
        EXIT_NUMERICAL
    );
}
