//! End-to-end tests of the command-line binary and its file formats.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use invsl::cli::SpectraFile;

fn invsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invsl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn forward_prints_closed_form_eigenvalues() {
    let out = invsl(&["forward", "--potential", "zero", "--pairs", "3", "--grid", "64"]);
    assert_success(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("i,n,lambda"));
    let pi = std::f64::consts::PI;
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        let (i, n, lambda): (u8, f64, f64) = (
            parts[0].parse().unwrap(),
            parts[1].parse().unwrap(),
            parts[2].parse().unwrap(),
        );
        let exact = if i == 1 {
            (pi * (n + 1.0)).powi(2)
        } else {
            (pi * (n + 0.5)).powi(2)
        };
        assert!(
            (lambda - exact).abs() < 1e-8 * exact.max(1.0),
            "{line} vs {exact}"
        );
    }
}

#[test]
fn synth_writes_closed_forms_and_shifts() {
    let dir = tempfile::tempdir().unwrap();
    let zero_path = dir.path().join("zero.json");
    let five_path = dir.path().join("five.json");
    assert_success(&invsl(&[
        "synth", "--potential", "zero", "--pairs", "4", "--grid", "128",
        "--out", zero_path.to_str().unwrap(),
    ]));
    assert_success(&invsl(&[
        "synth", "--potential", "const:5", "--pairs", "4", "--grid", "128",
        "--out", five_path.to_str().unwrap(),
    ]));
    let zero = SpectraFile::load(&zero_path).unwrap();
    let five = SpectraFile::load(&five_path).unwrap();
    assert!(zero.provenance.is_some());
    let pi = std::f64::consts::PI;
    for e in &zero.entries {
        let exact = if e.i == 1 {
            (pi * (e.n as f64 + 1.0)).powi(2)
        } else {
            (pi * (e.n as f64 + 0.5)).powi(2)
        };
        assert!((e.lambda - exact).abs() < 1e-8 * exact.max(1.0));
    }
    for (a, b) in zero.entries.iter().zip(&five.entries) {
        assert_eq!((a.i, a.n), (b.i, b.n));
        assert!((b.lambda - a.lambda - 5.0).abs() < 1e-8);
    }
}

#[test]
fn perturb_is_bounded_deterministic_and_identity_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.json");
    assert_success(&invsl(&[
        "synth", "--potential", "cos2pi", "--pairs", "5", "--grid", "128",
        "--out", base.to_str().unwrap(),
    ]));
    let perturb = |r: &str, seed: &str, out: &Path| {
        assert_success(&invsl(&[
            "perturb", "--in", base.to_str().unwrap(), "--noise-r", r,
            "--seed", seed, "--out", out.to_str().unwrap(),
        ]));
    };

    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    perturb("0.01", "42", &a);
    perturb("0.01", "42", &b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "same seed must be bitwise identical");

    let other = dir.path().join("other.json");
    perturb("0.01", "43", &other);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&other).unwrap());

    let original = SpectraFile::load(&base).unwrap();
    let noisy = SpectraFile::load(&a).unwrap();
    let mut max_change = 0.0_f64;
    for (x, y) in original.entries.iter().zip(&noisy.entries) {
        max_change = max_change.max((x.lambda - y.lambda).abs());
    }
    assert!(max_change > 0.0 && max_change <= 0.01, "max change {max_change}");

    let same = dir.path().join("same.json");
    perturb("0", "42", &same);
    let unchanged = SpectraFile::load(&same).unwrap();
    for (x, y) in original.entries.iter().zip(&unchanged.entries) {
        assert_eq!(x.lambda, y.lambda);
    }
}

#[test]
fn recover_from_exact_start_converges_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let spectra = dir.path().join("spectra.json");
    assert_success(&invsl(&[
        "synth", "--potential", "bump", "--pairs", "4", "--grid", "128",
        "--out", spectra.to_str().unwrap(),
    ]));
    let out_dir = dir.path().join("run");
    assert_success(&invsl(&[
        "recover", "--spectra", spectra.to_str().unwrap(),
        "--q0", "bump", "--known-potential", "bump",
        "--grid", "128", "--gtol", "1e-12",
        "--out-dir", out_dir.to_str().unwrap(),
    ]));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], serde_json::json!(true));
    assert_eq!(summary["iterations"], serde_json::json!(0));
    assert!(summary["final_g"].as_f64().unwrap() < 1e-12);
    assert_eq!(summary["delta2"].as_f64().unwrap(), 0.0);
    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,g_value,delta2,delta_lambda,step_size\n"));
    assert_eq!(trace.lines().count(), 2); // header + the single iterate
    assert!(out_dir.join("final_q.csv").exists());
    assert!(out_dir.join("final_q.json").exists());
}

#[test]
fn recover_reconstructs_small_problem() {
    let dir = tempfile::tempdir().unwrap();
    let spectra = dir.path().join("spectra.json");
    assert_success(&invsl(&[
        "synth", "--potential", "bump", "--pairs", "5", "--grid", "128",
        "--out", spectra.to_str().unwrap(),
    ]));
    let out_dir = dir.path().join("run");
    assert_success(&invsl(&[
        "recover", "--spectra", spectra.to_str().unwrap(),
        "--known-potential", "bump", "--grid", "128",
        "--max-iter", "25", "--gtol", "1e-14",
        "--out-dir", out_dir.to_str().unwrap(),
    ]));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let initial = summary["initial_g"].as_f64().unwrap();
    let final_g = summary["final_g"].as_f64().unwrap();
    assert!(final_g < 1e-8 * initial, "G: {initial:e} -> {final_g:e}");
    // Determinism of the whole pipeline: a rerun writes identical artifacts.
    let rerun_dir = dir.path().join("rerun");
    assert_success(&invsl(&[
        "recover", "--spectra", spectra.to_str().unwrap(),
        "--known-potential", "bump", "--grid", "128",
        "--max-iter", "25", "--gtol", "1e-14",
        "--out-dir", rerun_dir.to_str().unwrap(),
    ]));
    let a = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let b = fs::read_to_string(rerun_dir.join("trace.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn verify_passes_for_free_potential() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("verify");
    let out = invsl(&[
        "verify", "--potential", "zero", "--n-max", "4", "--grid", "256",
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let lemma = fs::read_to_string(out_dir.join("lemma.csv")).unwrap();
    assert!(lemma.starts_with("part,i,n,j,m,value,expected,abs_error\n"));
    // part (i): 2·4² rows, part (ii): (2·4)² rows
    assert_eq!(lemma.lines().count(), 1 + 32 + 64);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], serde_json::json!(true));
    assert!(summary["independence"]["smallest_eigenvalue"].as_f64().unwrap() > 0.0);
}

#[test]
fn degenerate_boundary_angles_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = invsl(&[
        "verify", "--potential", "zero", "--beta", "0.3", "--gamma", "0.3",
        "--out-dir", dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boundary"));
}

#[test]
fn unknown_potential_is_rejected() {
    let out = invsl(&["forward", "--potential", "wiggle"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wiggle"));
}

#[test]
fn potential_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let q_path = dir.path().join("q.json");
    let q = invsl::grid::GridFunction::sample(128, |x| x * (1.0 - x)).unwrap();
    fs::write(&q_path, serde_json::to_string(&q).unwrap()).unwrap();
    let spec = format!("@{}", q_path.display());
    let loaded = invsl::cli::parse_potential(&spec, 128).unwrap();
    assert_eq!(loaded.values(), q.values());
    // Resampling onto a different grid goes through the spline.
    let resampled = invsl::cli::parse_potential(&spec, 64).unwrap();
    assert!((resampled.eval(0.5).unwrap() - 0.25).abs() < 1e-10);
}
