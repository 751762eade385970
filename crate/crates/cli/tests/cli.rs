//! End-to-end runs of the `nlc` binary: exit codes, emitted files, and the
//! byte-level determinism the reports promise.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nlc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlc"))
}

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// A small instance so optimizer-driven tests stay quick; the shipped config
/// is exercised separately by the `verify` test.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("problem.toml");
    std::fs::write(
        &path,
        r#"
        [grid]
        L = 1.0
        n = 31
        omega_lo = 0.25
        omega_hi = 0.75

        [reaction]
        kind = "logistic"
        a0 = 0.5
        a1 = 2.0
        k = 1.0

        [time]
        T = 1.0
        nt = 40

        [cost]
        mu = 0.1

        [box]
        alpha = -1.0
        beta = 1.0

        [init]
        y0 = "const:1.0"

        [target]
        yd = "const:0.3"

        [opt]
        tol = 1e-9
        max_iters = 500
        seed = 42
        "#,
    )
    .unwrap();
    path
}

#[test]
fn missing_reaction_coefficient_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("broken.toml");
    // The shipped config minus the `a0 = ...` line.
    let text = std::fs::read_to_string(shipped_config()).unwrap();
    let without: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("a0"))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&config, without).unwrap();

    let output = nlc()
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "{}", stderr_of(&output));
    assert!(
        stderr_of(&output).contains("reaction.a0"),
        "stderr should name the missing key:\n{}",
        stderr_of(&output)
    );
}

#[test]
fn verify_passes_on_the_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let output = nlc()
        .args(["verify", "--config"])
        .arg(shipped_config())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(
        output.status.code(),
        Some(0),
        "stdout:\n{stdout}\nstderr:\n{}",
        stderr_of(&output)
    );
    assert!(stdout.contains("[PASS]"), "{stdout}");
    assert!(!stdout.contains("[FAIL]"), "{stdout}");
    assert!(dir.path().join("verification.json").exists());
}

#[test]
fn optimize_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    for sub in ["first", "second"] {
        let output = nlc()
            .args(["optimize", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(sub))
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    }
    for name in ["report.json", "control.csv", "history.csv"] {
        let first = std::fs::read(dir.path().join("first").join(name)).unwrap();
        let second = std::fs::read(dir.path().join("second").join(name)).unwrap();
        assert_eq!(first, second, "{name} differs between identical runs");
    }
}

#[test]
fn check_confirms_an_optimized_control() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let output = nlc()
        .args(["optimize", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let output = nlc()
        .args(["check", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--control")
        .arg(out.join("control.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("check.json")).unwrap()).unwrap();
    let stationarity = report["stationarity"].as_f64().unwrap();
    // Round trip through the CSV may cost a little precision, but the control
    // must still satisfy first-order optimality to within 10x the tolerance
    // the optimizer ran at.
    assert!(
        stationarity <= 10.0 * 1e-9,
        "stationarity {stationarity} too large after optimize -> check round trip"
    );
    let vi_min = report["vi_min"].as_f64().unwrap();
    assert!(vi_min >= -1e-8, "vi_min {vi_min}");
}

#[test]
fn solve_writes_full_trajectory_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let output = nlc()
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    for name in ["state.csv", "adjoint.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,value"), "{name} header");
        // 41 time levels x 31 nodes.
        assert_eq!(lines.count(), 41 * 31, "{name} row count");
        assert!(text.ends_with('\n') && !text.contains('\r'), "{name} line endings");
    }
}

#[test]
fn sweep_emits_one_report_per_weight_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let output = nlc()
        .args(["sweep", "--mu-grid", "0.05,0.5", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "mu,tracking,regularization,kkt_residual");
    assert_eq!(lines.len(), 3);
    assert!(out.join("mu_00.json").exists());
    assert!(out.join("mu_01_control.csv").exists());

    // A heavier penalty suppresses the control, so less tracking error is
    // removed: tracking cost should increase along the weight grid.
    let tracking: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(
        tracking[1] > tracking[0],
        "tracking {tracking:?} not increasing in mu"
    );
}

#[test]
fn unreadable_control_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let output = nlc()
        .args(["check", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--control")
        .arg(dir.path().join("no-such-file.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "{}", stderr_of(&output));
    assert!(
        stderr_of(&output).contains("no-such-file.csv"),
        "{}",
        stderr_of(&output)
    );
}
