use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tbdsim"))
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn tbdsim")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn fig3_sweep_matches_golden_bytes() {
    let cfg = golden("fig3.cfg");
    let out = stdout(&run(&["sweep", "--config", cfg.to_str().unwrap()]));
    let expected = std::fs::read_to_string(golden("fig3_sweep.csv")).unwrap();
    assert_eq!(out, expected);
    // A second run is byte-identical as well.
    assert_eq!(stdout(&run(&["sweep", "--config", cfg.to_str().unwrap()])), out);
}

#[test]
fn fig3_golden_matches_closed_form() {
    let text = std::fs::read_to_string(golden("fig3_sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("beta_deg,centroid_um,centroid_sigma_um,loss_db,amplification")
    );
    let mut count = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let b2 = (2.0 * v[0]).to_radians();
        let proj = 1.0 + 0.9 * b2.sin();
        let centroid = 120.0 * b2.cos() / proj;
        let loss = -10.0 * (proj / 2.0).log10();
        assert!((v[1] - centroid).abs() <= 1e-8 * centroid.abs().max(1.0), "{line}");
        assert_eq!(v[2], 9.0);
        assert!((v[3] - loss).abs() <= 1e-8 * loss.abs().max(1.0), "{line}");
        assert!((v[4] - centroid / 120.0).abs() <= 1e-8, "{line}");
        count += 1;
    }
    assert_eq!(count, 19);
}

#[test]
fn empty_grid_is_a_validation_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        "--beta-start",
        "50",
        "--beta-stop",
        "10",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.beta_stop_deg"));
    assert!(!target.exists());
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "beam.width_um = -3\n").unwrap();
    let out = run(&["profile", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beam.width_um"));
}

#[test]
fn degenerate_projection_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dark.cfg");
    std::fs::write(&cfg, "device.gamma = 1\ndevice.phi_deg = 180\n").unwrap();
    let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--beta-step", "5"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_input_exits_1() {
    let out = run(&["fit", "/nonexistent/sweep.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn schema_violation_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "beta_deg,centroid_um\n0,120\n10,x\n").unwrap();
    let out = run(&["fit", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn ccd_sweep_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    let frames = dir.path().join("frames");
    let out = run(&[
        "sweep",
        "--mode",
        "ccd",
        "--seed",
        "3",
        "--out",
        sweep.to_str().unwrap(),
        "--frames-dir",
        frames.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), 10);
    assert!(frames.join("beta_0.pgm").exists());

    let report: serde_json::Value =
        serde_json::from_str(&stdout(&run(&["fit", sweep.to_str().unwrap()]))).unwrap();
    let phi = report["phi_hat_deg"].as_f64().unwrap();
    let path = report["path_difference_um"].as_f64().unwrap();
    assert!((phi - 54.0).abs() < 2.0, "{report}");
    assert!((path - 0.095).abs() < 0.005, "{report}");
    let slope = report["linear_fit"]["slope_um_per_deg"].as_f64().unwrap();
    let sens = report["sensitivity_um"].as_f64().unwrap();
    assert!((sens - slope.abs() / 6.0).abs() < 1e-12, "{report}");
}

#[test]
fn analytic_fit_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    stdout(&run(&["sweep", "--out", sweep.to_str().unwrap()]));
    let report: serde_json::Value =
        serde_json::from_str(&stdout(&run(&["fit", sweep.to_str().unwrap(), "--lambda-um", "0.6328"]))).unwrap();
    assert!(report["residual_rms_um"].as_f64().unwrap() < 1e-6, "{report}");
}

#[test]
fn sensitivity_from_slope() {
    let report: serde_json::Value = serde_json::from_str(&stdout(&run(&[
        "sensitivity",
        "--slope",
        "-2.32",
        "--resolution-arcmin",
        "10",
    ])))
    .unwrap();
    let s = report["sensitivity_um"].as_f64().unwrap();
    assert!((s - 0.386_666_666_666_666_6).abs() < 1e-12);
}

#[test]
fn profile_defaults_have_three_curves() {
    let text = stdout(&run(&["profile"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("beta_deg,x_um,intensity_norm"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|s| s.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3 * 513);
    for beta in [30.0, 45.0, 60.0] {
        let curve: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] == beta).collect();
        assert_eq!(curve.first().unwrap()[1], -2400.0);
        assert_eq!(curve.last().unwrap()[1], 2400.0);
    }
    let single = stdout(&run(&["profile", "--betas", "0"]));
    let peak = single
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|s| s.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .max_by(|a, b| a[2].total_cmp(&b[2]))
        .unwrap();
    assert!((peak[1] - 120.0).abs() <= 4.69, "peak at {}", peak[1]);
}
