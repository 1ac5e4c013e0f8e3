use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn scenario(n: usize) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("scenarios/scenario{n}.cfg"))
}

fn tsn5g(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsn5g"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copy of a bundled scenario with one line substituted.
fn edited(dir: &TempDir, n: usize, from: &str, to: &str) -> PathBuf {
    let text = std::fs::read_to_string(scenario(n)).unwrap();
    assert!(text.contains(from), "scenario{n} has no `{from}`");
    let path = dir.path().join(format!("edited{n}.cfg"));
    std::fs::write(&path, text.replace(from, to)).unwrap();
    path
}

const UNIFORM: &str = r#"delay = { law = "uniform", min = "3.15ms", max = "16.55ms" }"#;

#[test]
fn constant_delay_gives_zero_jitter() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(
        &dir,
        1,
        UNIFORM,
        r#"delay = { law = "constant", value = "5.68ms" }"#,
    );
    let out = tsn5g(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("class=Deterministic, jitter=0ns"), "{text}");

    let capture = std::fs::read_to_string(dir.path().join("scenario1.capture.csv")).unwrap();
    assert!(capture.starts_with("point,seq,stream,t_ns,size_bytes\n"));
    assert!(!capture.contains('\r'));
    let report = std::fs::read_to_string(dir.path().join("scenario1.report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert!(report
        .lines()
        .any(|l| l.starts_with("gateway_egress,") && l.contains(",0,0.000000,")));
}

#[test]
fn run_writes_named_outputs() {
    let dir = TempDir::new().unwrap();
    let out = tsn5g(&[
        "run",
        scenario(4).to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("class=Infeasible"));
    assert!(dir.path().join("scenario4.capture.csv").exists());
    assert!(dir.path().join("scenario4.report.csv").exists());
}

#[test]
fn window_past_base_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(
        &dir,
        1,
        r#"offset = "0ms", duration = "25ms""#,
        r#"offset = "190ms", duration = "25ms""#,
    );
    let out = tsn5g(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(
        stderr(&out).contains("WindowExceedsBasePeriod"),
        "{}",
        stderr(&out)
    );
    assert!(!dir.path().join("scenario1.capture.csv").exists());
}

#[test]
fn malformed_config_exits_2_with_location() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(
        &dir,
        2,
        r#"base_period = "100ms""#,
        r#"base_period = "100 parsecs""#,
    );
    let out = tsn5g(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line"), "{err}");
    assert!(
        err.contains("base_period") || err.contains("parsecs"),
        "{err}"
    );

    let missing = tsn5g(&["run", "/nonexistent/scenario.cfg"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn seed_flag_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = tsn5g(&[
            "run",
            scenario(3).to_str().unwrap(),
            "--seed",
            seed,
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(out_dir.join("scenario3.capture.csv")).unwrap()
    };
    let a = run("42", "a");
    let b = run("42", "b");
    let c = run("43", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn analyze_reads_a_capture() {
    let dir = TempDir::new().unwrap();
    let out = tsn5g(&[
        "run",
        scenario(1).to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let capture = dir.path().join("scenario1.capture.csv");
    let out = tsn5g(&[
        "analyze",
        capture.to_str().unwrap(),
        "--period",
        "200ms",
        "--tol",
        "13.4ms",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for point in ["gateway_ingress:", "gateway_egress:", "core_arrival:"] {
        assert!(text.contains(point), "{text}");
    }
    assert!(text.contains("core_arrival: cycles=50"), "{text}");
    assert!(
        text.contains("unmatched gateway_egress->core_arrival: 0"),
        "{text}"
    );
}

#[test]
fn analyze_rejects_missing_or_corrupt_capture() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.csv");
    let out = tsn5g(&[
        "analyze",
        missing.to_str().unwrap(),
        "--period",
        "200ms",
        "--tol",
        "1ms",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let corrupt = dir.path().join("corrupt.csv");
    std::fs::write(
        &corrupt,
        "point,seq,stream,t_ns,size_bytes\ncore_arrival,1,,later,64\n",
    )
    .unwrap();
    let out = tsn5g(&[
        "analyze",
        corrupt.to_str().unwrap(),
        "--period",
        "200ms",
        "--tol",
        "1ms",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("corrupt.csv"), "{}", stderr(&out));
}

#[test]
fn sweep_marks_unschedulable_bases_invalid() {
    let dir = TempDir::new().unwrap();
    let out = tsn5g(&[
        "sweep",
        scenario(1).to_str().unwrap(),
        "--bases",
        "200ms,100ms,50ms,40ms,20ms",
        "--window",
        "fixed",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("scenario1.sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("200000000,25000000,ok,Deterministic,141900000,"));
    assert!(rows[1].starts_with("100000000,25000000,ok,Deterministic,41900000,"));
    assert!(rows[2].starts_with("50000000,25000000,ok,Infeasible,-8100000,"));
    assert!(
        rows[4].starts_with("20000000,25000000,invalid,"),
        "{}",
        rows[4]
    );
    assert!(rows[4].contains("WindowExceedsBasePeriod"));
}

#[test]
fn sweep_scales_windows_by_default() {
    let dir = TempDir::new().unwrap();
    let out = tsn5g(&[
        "sweep",
        scenario(1).to_str().unwrap(),
        "--bases",
        "200ms,100ms,50ms,40ms",
        "--jobs",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("100000000,12500000,ok,Deterministic,54400000,"),
        "{text}"
    );
    assert!(
        text.contains("40000000,5000000,ok,Marginal,1900000,"),
        "{text}"
    );
}

#[test]
fn single_base_sweep_matches_run() {
    let dir = TempDir::new().unwrap();
    let run = tsn5g(&[
        "run",
        scenario(2).to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let sweep = tsn5g(&[
        "sweep",
        scenario(2).to_str().unwrap(),
        "--bases",
        "100ms",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(run.status.success() && sweep.status.success());
    let report = std::fs::read_to_string(dir.path().join("scenario2.report.csv")).unwrap();
    let core: Vec<&str> = report
        .lines()
        .find(|l| l.starts_with("core_arrival,"))
        .unwrap()
        .split(',')
        .collect();
    let sweep_csv = std::fs::read_to_string(dir.path().join("scenario2.sweep.csv")).unwrap();
    let row: Vec<&str> = sweep_csv.lines().nth(1).unwrap().split(',').collect();
    // cv, fraction and jitter agree between the two paths.
    assert_eq!(row[5], core[8]);
    assert_eq!(row[6], core[9]);
    assert_eq!(row[7], core[7]);
}

#[test]
fn bad_flags_exit_2() {
    let out = tsn5g(&["sweep", scenario(1).to_str().unwrap(), "--bases", "fast"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tsn5g(&["analyze", "x.csv", "--period", "200", "--tol", "1ms"]);
    assert_eq!(out.status.code(), Some(2));
}
