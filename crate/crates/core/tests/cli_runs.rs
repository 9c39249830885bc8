use std::fs;
use std::path::Path;
use std::process::Command;

use dephase_walk::cli::{
    check_flagged, execute, load_config, main_with_args, read_series, sidecar_path, RunConfig, Sidecar, EXIT_CONFIG,
    EXIT_FLAGGED, EXIT_OK,
};

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("dephase-walk").chain(args.iter().copied()))
}

fn sidecar(csv: &Path) -> Sidecar {
    serde_json::from_str(&fs::read_to_string(sidecar_path(csv)).unwrap()).unwrap()
}

/// Runs `args`, re-runs from the sidecar into a second file, and compares.
fn round_trip(dir: &Path, name: &str, args: &[&str]) {
    let first = dir.join(format!("{name}.csv"));
    let second = dir.join(format!("{name}_again.csv"));
    let mut full: Vec<&str> = args.to_vec();
    let first_s = first.to_str().unwrap().to_string();
    full.extend(["--out", &first_s]);
    assert_eq!(run(&full), EXIT_OK, "{name}");
    let side = sidecar_path(&first);
    let side_s = side.to_str().unwrap();
    let second_s = second.to_str().unwrap();
    assert_eq!(run(&["--config", side_s, "--out", second_s]), EXIT_OK, "{name} replay");
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap(), "{name}");
    let text = fs::read_to_string(&first).unwrap();
    let line = text.lines().next().unwrap();
    assert!(line.starts_with("# dephase-walk v") && line.contains(&format!("mode={}", args[0])), "{line}");
}

#[test]
fn sidecars_reproduce_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    round_trip(d, "coh", &["coherent", "--J", "1", "--t-max", "5"]);
    round_trip(d, "dep", &["dephased", "--t-max", "10", "--n-traj", "50", "--seed", "42", "--threads", "3"]);
    round_trip(d, "m1", &["master1d", "--Je", "0.5", "--t-max", "10", "--sample-stride", "10"]);
    round_trip(d, "c2", &["corr2d", "--Je", "0.5", "--t-max", "12", "--snapshot-times", "2,10"]);
    round_trip(d, "fib", &["fiberloop", "--beta-frac", "0.8", "--m-max", "60", "--n-traj", "20", "--seed", "7"]);
    for f in ["c2_C_t2.csv", "c2_C_t10.csv", "coh_profile.csv", "m1_profile.csv"] {
        assert!(d.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read(d.join("c2_C_t10.csv")).unwrap(), fs::read(d.join("c2_again_C_t10.csv")).unwrap());
}

#[test]
fn dephased_csv_layout_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dep.csv");
    let code = run(&[
        "dephased",
        "--J",
        "1",
        "--dt-kick",
        "0.5",
        "--t-max",
        "25",
        "--n-traj",
        "40",
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(&out).unwrap();
    let header = text.lines().nth(1).unwrap();
    assert!(header.starts_with("t,mean_n2,mean_n2_stderr,mean_com2,mean_com2_stderr,"), "{header}");
    assert!(header.contains("n2_theory") && header.contains("com2_theory"));
    assert_eq!(text.lines().count(), 2 + 50);
    let s = sidecar(&out);
    assert_eq!(s.seed, Some(42));
    assert_eq!(s.invalid_trajectories, 0);
    assert_eq!(s.total_trajectories, 40);
    assert!(s.version.starts_with('v'));
    let series = read_series(&out, "n2_theory").unwrap();
    assert_eq!(series.values()[9], 5.0);
    // J_e t only reaches 12.5: the default window cannot be fitted
    assert!(s.fit.is_none() && !s.notes.is_empty());
}

#[test]
fn fit_mode_reads_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    assert_eq!(run(&["master1d", "--Je", "1", "--t-max", "20", "--out", csv.to_str().unwrap()]), EXIT_OK);
    let report = dir.path().join("fit.json");
    let code = run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--column",
        "mean_n2",
        "--window",
        "5,20",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!((v["exponent"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!((v["prefactor"].as_f64().unwrap() - 2.0).abs() < 1e-2);
    let missing = run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--column",
        "nope",
        "--window",
        "5,20",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(missing, EXIT_CONFIG);
}

#[test]
fn key_value_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    let out = dir.path().join("x.csv");
    fs::write(&cfg, format!("mode = master1d\nJ_e = 2\nt_max = 3\nout_path = {}\n", out.display())).unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "--t-max", "4"]), EXIT_OK);
    let s = sidecar(&out);
    assert_eq!(s.config.t_max, Some(4.0));
    assert_eq!(s.config.hop_rate, Some(2.0));
    assert_eq!(load_config(&cfg).unwrap().t_max, Some(3.0));
    fs::write(&cfg, "mode = master1d\nspeed = 3\n").unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap()]), EXIT_CONFIG);
}

#[test]
fn flagged_runs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        mode: Some(dephase_walk::cli::Mode::Master1d),
        out_path: Some(dir.path().join("m.csv")),
        t_max: Some(1.0),
        ..RunConfig::default()
    }
    .resolve()
    .unwrap();
    let mut outcome = execute(&cfg, None).unwrap();
    assert!(!outcome.sidecar.flagged);
    outcome.sidecar.flagged = true;
    let err = check_flagged(outcome.clone(), false).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_FLAGGED);
    assert!(check_flagged(outcome, true).is_ok());
}

#[test]
fn binary_exit_codes_and_thread_variable() {
    let exe = env!("CARGO_BIN_EXE_dephase-walk");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let status = Command::new(exe)
        .args(["dephased", "--t-max", "5", "--n-traj", "8", "--out", out.to_str().unwrap()])
        .env("DEPHASE_WALK_THREADS", "2")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
    let bad_env = Command::new(exe)
        .args(["dephased", "--t-max", "5", "--n-traj", "8", "--out", out.to_str().unwrap()])
        .env("DEPHASE_WALK_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(EXIT_CONFIG));
    let bad = Command::new(exe).args(["fiberloop", "--beta-frac", "1.5"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("beta_frac"));
    let unknown = Command::new(exe).args(["dephased", "--bogus"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(EXIT_CONFIG));
}
