use std::path::Path;
use std::process::{Command, Output};

fn alloop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alloop"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

const SPEC: &str = r#"{
    "dataset": { "kind": "synthetic", "n_per_class": 60, "means": [[-1, 0], [1, 0]], "stddev": 1.0 },
    "session": { "rounds": 2, "train": { "epochs": 3 } },
    "seeds": [0, 1],
    "band_study": { "bands": [[0, 0.5], [0.5, 1]] }
}"#;

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    let out = alloop(
        &["--config", "spec.json", "--out", "exp", "run"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let exp = dir.path().join("exp");
    for f in [
        "comparison.csv",
        "budget.csv",
        "runs/UNCERTAINTY_seed0/history.csv",
        "runs/RANDOM_seed1/queries.csv",
    ] {
        assert!(exp.join(f).is_file(), "missing {f}");
    }

    let out = alloop(&["--out", "rep", "report", "exp"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("rep/report.csv")).unwrap();
    // 2 strategies x 2 seeds x 2 rounds x 4 metrics.
    assert_eq!(csv.lines().count(), 1 + 32);
    assert!(dir.path().join("rep/UNCERTAINTY.dat").is_file());

    let out = alloop(
        &["--config", "spec.json", "--out", "bands", "bandstudy"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let bands = std::fs::read_to_string(dir.path().join("bands/bandstudy.csv")).unwrap();
    assert_eq!(bands.lines().count(), 1 + 2 * 3);
}

#[test]
fn single_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    let out = alloop(
        &[
            "--config",
            "spec.json",
            "--out",
            "exp",
            "--seed",
            "7",
            "run",
            "--rounds",
            "1",
            "--strategy",
            "random",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let runs: Vec<_> = std::fs::read_dir(dir.path().join("exp/runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(runs, ["RANDOM_seed7"]);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    let out = alloop(
        &["--config", "spec.json", "run", "--strategy", "greedy"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = alloop(&["run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.json"), r#"{"dataset": 3}"#).unwrap();
    let out = alloop(&["--config", "bad.json", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = alloop(&["report"], dir.path());
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("report.csv")).unwrap(),
        "strategy,seed,round,metric,value\n"
    );

    let run = dir.path().join("RANDOM_seed3");
    std::fs::create_dir(&run).unwrap();
    std::fs::write(run.join("history.csv"), "garbage\n1,2,3\n").unwrap();
    let out = alloop(&["report", "RANDOM_seed3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("MALFORMED_HISTORY") && err.contains("history.csv"),
        "{err}"
    );
}
