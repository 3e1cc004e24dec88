use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use margin_gate::{parse_report, parse_response, Complex64, Verdict};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_margin-gate"));
    c.env("MARGIN_GATE_NO_COLOR", "1");
    c
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

// Closed-form impedances of the bundled fixtures, written independently of
// the network evaluator.

fn rl(r: f64, l: f64, w: f64) -> Complex64 {
    Complex64::new(r, w * l)
}

fn rc(r: f64, c: f64, w: f64) -> Complex64 {
    Complex64::new(r, -1.0 / (w * c))
}

fn par(a: Complex64, b: Complex64) -> Complex64 {
    a * b / (a + b)
}

/// 66 kV, 1 GVA, X/R 10 source in parallel with R 0.5 Ω + C 5 µF.
fn z_net_old(f: f64) -> Complex64 {
    let w = 2.0 * PI * f;
    let z = 66e3f64.powi(2) / 1e9;
    let r = z / (1.0 + 100.0f64).sqrt();
    let l = 10.0 * r / (2.0 * PI * 50.0);
    par(rl(r, l, w), rc(0.5, 5e-6, w))
}

fn z_ppm_existing(f: f64) -> Complex64 {
    let w = 2.0 * PI * f;
    par(rl(3.0, 0.020, w), rc(8.0, 2e-6, w))
}

fn z_ppm_new_base(f: f64) -> Complex64 {
    let w = 2.0 * PI * f;
    par(rl(2.0, 0.015, w), rc(6.0, 3e-6, w))
}

#[test]
fn compliant_fixture_meets_caution_margin_on_a_dense_sweep() {
    // 200k-point sweep of the exact new loop gain; every unit-circle crossing
    // must sit more than PM_caution away from the negative real axis
    let n = 200_000;
    let l = |f: f64| par(z_net_old(f), z_ppm_new_base(f)) / z_ppm_existing(f);
    let (lo, hi) = (10f64.ln(), 2500f64.ln());
    let mut crossings = 0;
    let mut prev: Option<(f64, Complex64)> = None;
    for i in 0..=n {
        let f = (lo + (hi - lo) * i as f64 / n as f64).exp();
        let z = l(f);
        if let Some((_, zp)) = prev {
            if (zp.norm() - 1.0) * (z.norm() - 1.0) < 0.0 {
                crossings += 1;
                let pm = (180.0 + z.arg().to_degrees() + 180.0).rem_euclid(360.0) - 180.0;
                assert!(pm.abs() > 30.0, "crossing at {f} Hz with PM {pm}");
            }
        }
        prev = Some((f, z));
    }
    assert_eq!(crossings, 2);

    let dir = tempfile::tempdir().unwrap();
    let out = run(&["check", "--synth", s(&fixture("compliant-a.json")), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = parse_report(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.overall_verdict, Verdict::Compliant);
    assert_eq!(report.l_new.margins.len(), crossings);
}

#[test]
fn scaled_fixture_sits_at_twice_the_limit() {
    let f_c: f64 = 667.35;
    let w = 2.0 * PI * f_c;
    let l_old = z_net_old(f_c) / z_ppm_existing(f_c);
    let pm_old = 180.0 + l_old.arg().to_degrees();
    let limit = z_net_old(f_c).norm() / (2.0 * ((pm_old.abs() - 15.0) / 2.0).to_radians().sin());
    let z_new = par(rl(38.5978, 0.289484, w), rc(115.793, 1.55449e-7, w));
    let ratio = z_new.norm() / limit;
    assert!((ratio - 2.0).abs() < 0.02, "ratio {ratio}");

    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "check",
        "--synth",
        s(&fixture("tableii-like.json")),
        "--limit-at",
        "critical",
        "--critical-freqs",
        "667.35",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("violation"));
    let report = parse_report(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.compliance.len(), 1);
    let rec = &report.compliance[0];
    // 667.35 Hz lies between grid nodes: interpolated vs exact
    assert!((rec.z_limit_ohm.unwrap() - limit).abs() < 1e-3 * limit);
    assert!((rec.z_new_mag_ohm / rec.z_limit_ohm.unwrap() - ratio).abs() < 1e-3);
}

#[test]
fn missing_input_names_parse_stage() {
    let out = run(&[
        "check",
        "--z-ppm-existing",
        "/nonexistent/a.csv",
        "--z-net-old",
        "/nonexistent/b.csv",
        "--z-ppm-new",
        "/nonexistent/c.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage parse"));
}

#[test]
fn critical_mode_must_be_explicit() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture("compliant-a.json");
    let out = run(&["check", "--synth", s(&fx), "--critical-freqs", "500", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage config"));
    let out = run(&["check", "--synth", s(&fx), "--limit-at", "critical", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_policy_and_format_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture("compliant-a.json");
    let out = run(&["check", "--synth", s(&fx), "--pm-min-deg", "40", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["check", "--synth", s(&fx), "--format", "pdf", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pdf"));
}

#[test]
fn synth_tables_feed_file_mode_with_the_same_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["synth", s(&fixture("compliant-a.json")), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let files = ["z_ppm_existing.csv", "z_net_old.csv", "z_ppm_new.csv"].map(|f| dir.path().join(f));
    for f in &files {
        parse_response(&std::fs::read(f).unwrap()).unwrap();
    }
    let report_dir = dir.path().join("out");
    let out = run(&[
        "check",
        "--z-ppm-existing",
        s(&files[0]),
        "--z-net-old",
        s(&files[1]),
        "--z-ppm-new",
        s(&files[2]),
        "--format",
        "json,markdown,nyquist_svg,bode_svg",
        "--out-dir",
        s(&report_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "report.md", "nyquist.svg", "bode.svg"] {
        assert!(report_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn seeded_synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = run(&["synth", "--seed", "42", "--out-dir", s(d.path())]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["case.json", "z_ppm_existing.csv", "z_net_old.csv", "z_ppm_new.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn loopgain_margins_limit_and_nyquist_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture("compliant-a.json");
    let out = run(&["loopgain", "--synth", s(&fx), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("consistency_error"));

    // the existing loop has a 20.9° crossover: caution, exit 1
    let out = run(&["margins", s(&dir.path().join("l_old.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["verdict"], "caution");
    let out = run(&["margins", s(&dir.path().join("l_new.csv"))]);
    assert_eq!(out.status.code(), Some(0));

    let out = run(&["limit", "--synth", s(&fx), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("compliance.csv")).unwrap();
    assert!(table.starts_with("freq_hz,z_new_ohm,z_limit_ohm,verdict\n"));
    assert_eq!(table.lines().count(), 3);

    let out = run(&["nyquist", "--synth", s(&fixture("tableii-like.json")), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let svg = std::fs::read_to_string(dir.path().join("nyquist.svg")).unwrap();
    assert!(svg.contains("r=\"0.177828\""));
}
