//! End-to-end runs of the `patchdyn` binary: exit codes, output files,
//! reproducibility from the resolved snapshot, and worker-count
//! independence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchdyn"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// nu = 1 mirror pair, coarsened for speed. The limit is dimorphic:
/// atoms at -+sqrt(3)/2, pressures 2.25.
const MIRROR: &str = r#"
[model]
K = 2
L = 2.0
epsilon = 0.02

[patch.1]
growth.kind = "quadratic"
a = -1.0
b = -2.0
c = 2.0
d = 1.0
psi = 1.0

[patch.2]
growth.kind = "quadratic"
a = -1.0
b = 2.0
c = 2.0
d = 1.0
psi = 1.0

[migration]
matrix = [[0.0, 1.0], [1.0, 0.0]]

[sim]
grid_points = 201
dt = 0.005
tau_end = 400.0
steady_tol = 1e-8
sample_stride = 200

[init.1]
center = -0.4
mass = 1.0
width = 0.1

[init.2]
center = 0.4
mass = 1.0
width = 0.1
"#;

/// One isolated patch: R = 3 - (x+1)^2 - I. The limit is an atom at -1
/// with I = 3; finite epsilon shifts the pressure by O(epsilon).
const SINGLE: &str = r#"
[model]
K = 1
L = 2.5
epsilon = 0.02

[patch.1]
growth.kind = "quadratic"
a = -1.0
b = -2.0
c = 2.0
d = 1.0
psi = 1.0

[migration]
matrix = [[0.0]]

[sim]
grid_points = 301
dt = 0.005
tau_end = 600.0
steady_tol = 1e-8
sample_stride = 100

[init.1]
center = 0.5
mass = 1.0
width = 0.2
"#;

/// Mirror pair with patch 2's base fertility raised by 0.2: not mirror
/// symmetric, and the offset is absorbed by I_2, so the limit pressures
/// are (2.25, 2.45) with the mirror atoms.
const ASYM: &str = r#"
[model]
K = 2
L = 2.0
epsilon = 0.02

[patch.1]
growth.kind = "quadratic"
a = -1.0
b = -2.0
c = 2.0
d = 1.0
psi = 1.0

[patch.2]
growth.kind = "quadratic"
a = -1.0
b = 2.0
c = 2.2
d = 1.0
psi = 1.0

[migration]
matrix = [[0.0, 1.0], [1.0, 0.0]]
"#;

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = run(&["simulate", "--out", "/tmp/never-created"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--config"));
}

#[test]
fn simulate_fills_the_run_directory_and_reruns_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "mirror.toml", MIRROR);
    let out1 = tmp.path().join("run1");
    let st = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(0), "stderr: {}", stderr_of(&st));
    for f in ["timeseries.csv", "profile_final.csv", "config.resolved.toml", "manifest.toml"] {
        assert!(out1.join(f).exists(), "{f} missing");
    }
    let man: toml::Value = std::fs::read_to_string(out1.join("manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(man["command"].as_str(), Some("simulate"));
    assert_eq!(man["exit_code"].as_integer(), Some(0));
    assert_eq!(man["status"].as_str(), Some("ok"));
    assert_eq!(man["config"].as_str(), Some("config.resolved.toml"));
    let outputs: Vec<&str> = man["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|v| v.as_str())
        .collect();
    assert!(outputs.contains(&"timeseries.csv"));
    assert!(outputs.contains(&"profile_final.csv"));

    // the snapshot pins every resolved value, so a rerun from it must
    // reproduce the data byte for byte
    let out2 = tmp.path().join("run2");
    let resolved = out1.join("config.resolved.toml");
    let st2 = run(&["simulate", "--config", resolved.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(st2.status.code(), Some(0), "stderr: {}", stderr_of(&st2));
    for f in ["timeseries.csv", "profile_final.csv", "config.resolved.toml"] {
        assert_eq!(
            std::fs::read(out1.join(f)).unwrap(),
            std::fs::read(out2.join(f)).unwrap(),
            "{f} differs between the original and the snapshot rerun"
        );
    }
}

#[test]
fn checkpoints_write_profiles_until_the_run_goes_steady() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "single.toml", SINGLE);
    let out = tmp.path().join("run");
    let st = run(&[
        "simulate",
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "--checkpoints", "5,25,590",
    ]);
    assert_eq!(st.status.code(), Some(0), "stderr: {}", stderr_of(&st));
    assert!(out.join("profile_tau_5.csv").exists());
    assert!(out.join("profile_tau_25.csv").exists());
    // the run goes steady near tau = 480, so the last checkpoint is never
    // reached and the manifest says so
    assert!(!out.join("profile_tau_590.csv").exists());
    let man = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(man.contains("steady at tau"), "manifest lacks the steady note: {man}");
}

#[test]
fn bad_checkpoint_flags_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "single.toml", SINGLE);
    let out = tmp.path().join("run");
    for bad in ["abc", "700", "-3"] {
        let st = run(&[
            "simulate",
            "--config", cfg.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--checkpoints", bad,
        ]);
        assert_eq!(st.status.code(), Some(2), "checkpoints {bad:?}");
    }
}

#[test]
fn asymptotic_matches_the_mirror_algebra() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "mirror.toml", MIRROR);
    let out = tmp.path().join("run");
    let st = run(&["asymptotic", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(0), "stderr: {}", stderr_of(&st));

    let solution = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    let rows: Vec<&str> = solution.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "atom,x,scale,rho_1,rho_2");
    let parse_row = |line: &str| -> Vec<f64> {
        line.split(',').skip(1).map(|t| t.parse().unwrap()).collect()
    };
    let a = parse_row(rows[1]);
    let b = parse_row(rows[2]);
    let x_star = 3.0f64.sqrt() / 2.0;
    assert!((a[0] + x_star).abs() < 1e-6);
    assert!((b[0] - x_star).abs() < 1e-6);
    assert!((a[1] - 2.25).abs() < 1e-6);
    assert!((b[1] - 2.25).abs() < 1e-6);

    let constraints = std::fs::read_to_string(out.join("constraints.csv")).unwrap();
    for line in constraints.lines().skip(1) {
        let pass = line.split(',').nth(1).unwrap();
        assert_eq!(pass, "true", "failed constraint row: {line}");
    }
}

#[test]
fn forced_symmetric_mode_rejects_an_asymmetric_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "asym.toml", ASYM);
    let out = tmp.path().join("run");
    let st = run(&[
        "asymptotic",
        "--mode", "symmetric",
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));
    assert!(stderr_of(&st).contains("symmetry"));
}

#[test]
fn auto_mode_falls_back_to_the_general_solver_on_asymmetry() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "asym.toml", ASYM);
    let out = tmp.path().join("run");
    let st = run(&["asymptotic", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(0), "stderr: {}", stderr_of(&st));
    assert!(stderr_of(&st).contains("general solver"));

    // the fertility offset moves only patch 2's pressure: I = (2.25, 2.45)
    let solution = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    let pressures = solution
        .lines()
        .find(|l| l.starts_with("# pressures:"))
        .expect("pressure comment");
    let vals: Vec<f64> = pressures
        .trim_start_matches("# pressures:")
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert!((vals[0] - 2.25).abs() < 1e-6);
    assert!((vals[1] - 2.45).abs() < 1e-6);
}

#[test]
fn verify_closes_the_loop_on_the_single_patch_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "single.toml", SINGLE);
    let out = tmp.path().join("run");
    let st = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(0), "stderr: {}", stderr_of(&st));
    let comparison = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let verdict = comparison.lines().nth(1).unwrap();
    assert!(verdict.starts_with("true,true,"), "comparison row: {verdict}");
    for f in ["timeseries.csv", "profile_final.csv", "solution.csv", "constraints.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn verify_flags_a_tolerance_it_cannot_meet() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "single.toml", SINGLE);
    let out = tmp.path().join("run");
    // the finite-mutation pressure sits O(epsilon) below the limit, so a
    // 1e-6 pressure tolerance must fail
    let st = run(&[
        "verify",
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "--tol-pressure", "1e-6",
    ]);
    assert_eq!(st.status.code(), Some(1), "stderr: {}", stderr_of(&st));
    let man: toml::Value = std::fs::read_to_string(out.join("manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(man["status"].as_str(), Some("tolerance-failed"));
}

#[test]
fn sweep_output_does_not_depend_on_the_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "mirror.toml", MIRROR);
    let one = tmp.path().join("w1");
    let two = tmp.path().join("w2");
    for (out, workers) in [(&one, "1"), (&two, "2")] {
        let st = run(&[
            "sweep",
            "--config", cfg.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--values", "1.0,2.5",
            "--workers", workers,
        ]);
        assert_eq!(st.status.code(), Some(0), "stderr: {}", stderr_of(&st));
    }
    let csv1 = std::fs::read(one.join("sweep.csv")).unwrap();
    let csv2 = std::fs::read(two.join("sweep.csv")).unwrap();
    assert_eq!(csv1, csv2);

    // dimorphic at nu = 1, monomorphic at nu = 2.5
    let text = String::from_utf8(csv1).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("nu,n_atoms,I,x_left,x_right"));
    assert!(lines.next().unwrap().starts_with("1,2,"));
    assert!(lines.next().unwrap().starts_with("2.5,1,"));
}

#[test]
fn sweep_records_failures_in_place_and_exits_nonconverged() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "mirror.toml", MIRROR);
    let out = tmp.path().join("run");
    // both bracket ends sit above the root, so every solve fails
    let st = run(&[
        "sweep",
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "--values", "1.0,2.5",
        "--bracket", "5,6",
    ]);
    assert_eq!(st.status.code(), Some(4), "stderr: {}", stderr_of(&st));
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(text.contains("# nu=1 failed:"), "sweep.csv: {text}");
    assert!(text.contains("# nu=2.5 failed:"), "sweep.csv: {text}");
    let man: toml::Value = std::fs::read_to_string(out.join("manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(man["status"].as_str(), Some("non-convergence"));
}

#[test]
fn unknown_config_keys_warn_but_do_not_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let noisy = format!("{MIRROR}\n[extra]\nknob = 1\n");
    let cfg = write_config(tmp.path(), "noisy.toml", &noisy);
    let out = tmp.path().join("run");
    let st = run(&["asymptotic", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(0), "stderr: {}", stderr_of(&st));
    assert!(stderr_of(&st).contains("unknown config"), "stderr: {}", stderr_of(&st));
}
