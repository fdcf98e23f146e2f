use std::fs;
use std::process::Command;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bench"))
}

const SMALL: &str = "name = cli\nmodel = ungm\nhorizon = 30\nruns = 5\ntraining_runs = 2\n\
                     timing_runs = 1\nwidth_grid = 2, 8\nestimators = ukf, mee, a-meef\n\
                     [process_noise]\nvariance = 1e-7\n[measurement_noise]\nvariance = 0.01\n";

#[test]
fn list_scenarios_names_every_builtin() {
    let out = bench().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["table1", "table2", "vehicle-a-known", "vehicle-d-unknown"] {
        assert!(text.lines().any(|l| l.trim() == name), "{name} missing");
    }
}

#[test]
fn run_writes_tables_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out_dir = dir.path().join(format!("w{workers}"));
        let out = bench()
            .env("BENCH_WORKERS", workers)
            .args(["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let listed = String::from_utf8(out.stdout).unwrap();
        assert_eq!(listed.lines().count(), 4);
        outputs.push((
            fs::read_to_string(out_dir.join("cli_rmse.csv")).unwrap(),
            fs::read_to_string(out_dir.join("cli_series.csv")).unwrap(),
            fs::read_to_string(out_dir.join("cli_training.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].0.starts_with("estimator,params,full,diverged_runs"));
}

#[test]
fn overrides_and_markdown_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench()
        .args(["run", "table1", "--runs", "2", "--seed", "9", "--format", "md", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let md = fs::read_to_string(dir.path().join("table1.md")).unwrap();
    assert!(md.contains("2 Monte-Carlo runs, 100 steps, master seed 9."));
    assert!(dir.path().join("table1_series.csv").exists());
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "model = ungm\nhorizon = 10\nbogus = 1\n").unwrap();
    let out = bench()
        .args(["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("bogus"), "{err}");
}

#[test]
fn missing_file_reports_its_path() {
    let out = bench().args(["run", "/nonexistent/x.cfg", "--out", "/tmp"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("/nonexistent/x.cfg"));
}

#[test]
fn bad_worker_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench()
        .env("BENCH_WORKERS", "many")
        .args(["run", "table1", "--runs", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("BENCH_WORKERS"));
}

#[test]
fn converge_prints_the_report() {
    let out = bench().args(["converge", "vehicle-b-known", "--step", "3"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["nu", "sigma2*", "conditions met"] {
        assert!(text.contains(key), "{key} missing in\n{text}");
    }
}
