//! End-to-end runs of the `melnikov` binary.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_melnikov"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn duffing_scan_has_sine_sign_pattern() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("duffing.conf");
    let out = dir.path().join("scan.csv");
    let o = run(&["scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = parse_csv(&fs::read_to_string(&out).unwrap());
    assert_eq!(header, ["phase", "M", "err", "class", "T", "Tstar"]);
    assert_eq!(rows.len(), 16);
    // alpha = 1, g0 = 1/2: M = sin(theta) * (-6 pi / sinh(pi))
    let c = -6.0 * PI / PI.sinh();
    for r in &rows {
        let (ph, m): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!((m - c * ph.sin()).abs() < 1e-8, "{r:?}");
        if ph.sin().abs() > 1e-9 {
            assert_eq!(m.signum(), -ph.sin().signum());
        }
        assert_eq!(r[3], "absolute");
    }
}

#[test]
fn rtbp_zeros_certified_at_zero_and_pi() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("rtbp.conf");
    let out = dir.path().join("zeros.json");
    let o = run(&["zeros", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["meta"].is_object() && v["records"].is_array());
    assert_eq!(v["records"].as_array().unwrap().len(), 64);
    let certs = v["certificates"].as_array().unwrap();
    assert_eq!(certs.len(), 2, "{certs:?}");
    for (c, target) in certs.iter().zip([0.0, PI]) {
        let ph = c["phase"].as_f64().unwrap();
        let d = (ph - target).rem_euclid(2.0 * PI);
        assert!(d.min(2.0 * PI - d) < 1e-6, "{c}");
        assert!(c["margin"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn empty_grid_is_a_usage_error_without_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "n0.conf", "model.id = duffing-oscillator\nrun.N = 0\n");
    let out = dir.path().join("never.csv");
    let o = run(&["scan", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let good = configs().join("duffing.conf");
    let good = good.to_str().unwrap();
    let unknown = write_config(&dir, "k.conf", "model.id = kepler\n");
    let bad_param = write_config(&dir, "a.conf", "model.id = duffing-oscillator\nmodel.alpha = -1\n");
    let bad_key = write_config(&dir, "b.conf", "model.id = duffing-oscillator\nrun.colour = red\n");
    let unwritable = dir.path().join("missing-dir").join("x.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["scan", "--config", &unknown],
        vec!["scan", "--config", &bad_param],
        vec!["scan", "--config", &bad_key],
        vec!["scan", "--config", good, "--out", unwritable.to_str().unwrap()],
        vec!["scan", "--config", "/definitely/not/here.conf"],
        vec!["frobnicate", "--config", good],
        vec!["scan"],
        vec!["scan", "--config", good, "--format", "xml"],
    ];
    for args in cases {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty(), "{args:?}");
    }
    // splitting needs a hyperbolic limit orbit
    let rtbp = configs().join("rtbp.conf");
    assert_eq!(run(&["verify-splitting", "--config", rtbp.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn unconverged_scan_exits_two_with_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "t.conf", "model.id = duffing-oscillator\nrun.N = 8\nrun.tol = 1e-300\n");
    let o = run(&["scan", "--config", &cfg, "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["meta"]["converged"], Value::Bool(false));
    assert_eq!(v["records"].as_array().unwrap().len(), 8);
}

#[test]
fn output_is_byte_identical_across_runs() {
    let cfg = configs().join("duffing.conf");
    let cfg = cfg.to_str().unwrap();
    for (cmd, fmt) in [("scan", "csv"), ("zeros", "json"), ("diagnostics", "json"), ("derivative", "csv")] {
        let a = run(&[cmd, "--config", cfg, "--format", fmt]);
        let b = run(&[cmd, "--config", cfg, "--format", fmt]);
        assert_eq!(a.status.code(), Some(0), "{cmd}");
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{cmd} {fmt}");
    }
}

#[test]
fn csv_floats_round_trip() {
    let cfg = configs().join("duffing.conf");
    let o = run(&["scan", "--config", cfg.to_str().unwrap()]);
    let (_, rows) = parse_csv(&String::from_utf8(o.stdout).unwrap());
    for r in rows {
        for cell in [&r[0], &r[1], &r[2], &r[4], &r[5]] {
            let x: f64 = cell.parse().unwrap();
            assert_eq!(&format!("{x:?}"), cell);
            let mantissa: String = cell.split(['e', 'E']).next().unwrap().chars().filter(char::is_ascii_digit).collect();
            let digits = mantissa.trim_start_matches('0').len();
            assert!(digits <= 17, "{cell}");
        }
    }
}

#[test]
fn diagnostics_conditional_witness() {
    let cfg = configs().join("holmes-marsden.conf");
    let o = run(&["diagnostics", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let m = &v["meta"];
    assert_eq!(m["class"], "conditional");
    let (sm, sw) = (m["matched_spread"].as_f64().unwrap(), m["mismatched_spread"].as_f64().unwrap());
    assert!(sw >= 10.0 * sm, "{sm} {sw}");
    let seqs: Vec<&str> = v["records"].as_array().unwrap().iter().map(|r| r["sequence"].as_str().unwrap()).collect();
    assert_eq!(seqs.iter().filter(|s| **s == "matched").count(), 11);
    assert_eq!(seqs.iter().filter(|s| **s == "mismatched").count(), 11);
}

#[test]
fn diagnostics_absolute_traces_agree() {
    let cfg = configs().join("duffing.conf");
    let o = run(&["diagnostics", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let m = &v["meta"];
    assert!(m["matched_minus_plain"].as_f64().unwrap().abs() <= m["tol"].as_f64().unwrap());
    assert_eq!(m["matched_agrees_with_plain"], Value::Bool(true));
    for d in m["drift_h0"].as_array().unwrap().iter().chain(m["drift_f"].as_array().unwrap()) {
        assert!(d.as_f64().unwrap() <= 1e-9);
    }
}

#[test]
fn diagnostics_rtbp_tail_audit() {
    let cfg = configs().join("rtbp.conf");
    let o = run(&["diagnostics", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let m = &v["meta"];
    assert!(m["tail_bound"].as_f64().unwrap() <= 0.5 * m["tol"].as_f64().unwrap());
    assert_eq!(m["tail_ok"], Value::Bool(true));
}

#[test]
fn seed_changes_only_the_check_phases() {
    let dir = TempDir::new().unwrap();
    let base = fs::read_to_string(configs().join("duffing.conf")).unwrap();
    let a = write_config(&dir, "a.conf", &format!("{base}run.seed = 1\n"));
    let b = write_config(&dir, "b.conf", &format!("{base}run.seed = 2\n"));
    let va: Value = serde_json::from_slice(&run(&["diagnostics", "--config", &a, "--format", "json"]).stdout).unwrap();
    let vb: Value = serde_json::from_slice(&run(&["diagnostics", "--config", &b, "--format", "json"]).stdout).unwrap();
    assert_ne!(va["meta"]["drift_phases"], vb["meta"]["drift_phases"]);
    assert_eq!(va["records"], vb["records"]);
}

#[test]
fn splitting_report_per_eps() {
    let cfg = configs().join("duffing.conf");
    let o = run(&["verify-splitting", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = parse_csv(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(&header[..6], ["phase", "M", "err", "class", "T", "Tstar"]);
    assert_eq!(rows.len(), 3);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let dev: Vec<f64> = rows.iter().map(|r| r[col("deviation")].parse().unwrap()).collect();
    // deviation shrinks with eps
    assert!(dev[0] > dev[1] && dev[1] > dev[2], "{dev:?}");
}
