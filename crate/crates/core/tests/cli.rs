use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lodwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lodwave"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn lodwave")
}

/// A sweep small enough for a test: h = 2^-4, H = 2^-1..2^-2.
fn small_run(out: &Path, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec![
        "example1",
        "--fine",
        "4",
        "--eps",
        "3",
        "--hmin",
        "1",
        "--hmax",
        "2",
        "--ell",
        "1",
        "--variants",
        "mllod_weighted,mllod_naive,fem",
        "--set",
        "timing=false",
        "--deterministic",
        "--threads",
        "1",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    lodwave(&args)
}

fn csv_rows(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("errors.csv"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn full_success_exits_zero_and_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(dir.path());
    assert!(rows[0].starts_with("example,variant,ell,H,rel_err_H1,err_dt_L2,eoc,offline_s,online_s"));
    // 2 H values × (weighted + naive + FEM)
    assert_eq!(rows.len(), 1 + 6);
    for name in ["timing.csv", "stability.csv", "config.echo.txt", "summary.txt", "curve_fem.dat", "energy_curve_fem.dat"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let curve = fs::read_to_string(dir.path().join("curve_mllod_weighted_ell1.dat")).unwrap();
    let hs: Vec<f64> = curve
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(hs, vec![0.5, 0.25]);
    // deterministic mode leaves the timing columns empty
    assert!(rows[1..].iter().all(|r| r.split(',').nth(7) == Some("") && r.split(',').nth(8) == Some("")));
}

#[test]
fn deterministic_runs_and_echo_replay_are_byte_identical() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(small_run(a.path(), &[]).status.code(), Some(0));
    assert_eq!(small_run(b.path(), &[]).status.code(), Some(0));
    let first = fs::read(a.path().join("errors.csv")).unwrap();
    assert_eq!(first, fs::read(b.path().join("errors.csv")).unwrap());

    let echo = a.path().join("config.echo.txt");
    let out = lodwave(&["--config", echo.to_str().unwrap(), "--out", c.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(first, fs::read(c.path().join("errors.csv")).unwrap());
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    // coarse level finer than the fine level
    let out = lodwave(&[
        "example1",
        "--fine",
        "4",
        "--eps",
        "3",
        "--hmin",
        "1",
        "--hmax",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = lodwave(&["--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rows_beyond_the_stability_bound_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // Δt = 2H violates the step bound of every coarse scheme
    let out = small_run(dir.path(), &["--set", "dt_scale=coarse", "--set", "dt_factor=2"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("failed:"));
    assert!(summary.contains("exceeds the stability bound"));
}
