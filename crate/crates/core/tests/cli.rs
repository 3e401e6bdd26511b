mod common;

use std::path::Path;
use std::process::{Command, Output};

use pmpkit::csv_io;

const LQR: &str = r#"n = 2
m = 1
f = ["q1 + u1", "(q1^2 + u1^2)/2"]
psi = "q2"
G = []
q0 = [1.0, 0.0]
T = 1.0
omega = { type = "box", lo = [-5.0], hi = [5.0] }
"#;

fn pmpkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmpkit"))
        .args(args)
        .current_dir(dir)
        .env_remove("PMPKIT_OUT")
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("lqr.toml"), LQR).unwrap();
    let (u, _) = common::lqr_oracle(400);
    std::fs::write(dir.path().join("u.csv"), csv_io::control_csv(&u)).unwrap();
    dir
}

#[test]
fn check_oracle_candidate_passes() {
    let dir = setup();
    let out = pmpkit(dir.path(), &["check", "--problem", "lqr.toml", "--grid", "400", "--control", "u.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.starts_with("verdict PASS"));
    assert_eq!(report.lines().filter(|l| l.contains(" PASS value")).count(), 6);
    assert_eq!(std::fs::read_to_string(dir.path().join("o/report.txt")).unwrap(), report);
    assert!(dir.path().join("o/hamiltonian.csv").exists());
}

#[test]
fn check_failure_exits_three() {
    let dir = setup();
    // the default constant control is not optimal
    let out = pmpkit(dir.path(), &["check", "--problem", "lqr.toml", "--grid", "100", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stdout).unwrap().lines().any(|l| l.starts_with("hamiltonian") && l.contains("FAIL")));
    let out = pmpkit(dir.path(), &["check", "--problem", "lqr.toml", "--grid", "400", "--control", "u.csv", "--psi", "0", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stdout).unwrap().lines().any(|l| l.starts_with("nontriviality") && l.contains("FAIL")));
}

#[test]
fn blow_up_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = LQR.replace("n = 2", "n = 1").replace(r#"["q1 + u1", "(q1^2 + u1^2)/2"]"#, r#"["q1^2"]"#)
        .replace("psi = \"q2\"", "psi = \"q1\"").replace("[1.0, 0.0]", "[1.0]").replace("T = 1.0", "T = 2.0");
    std::fs::write(dir.path().join("p.toml"), cfg).unwrap();
    let out = pmpkit(dir.path(), &["simulate", "--problem", "p.toml", "--grid", "200", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("blew up at t = 1."), "{err}");
    assert!(!dir.path().join("o/trajectory.csv").exists());
}

#[test]
fn malformed_expression_exits_one_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.toml"), LQR.replace("q1 + u1", "q1 + * u1")).unwrap();
    let out = pmpkit(dir.path(), &["simulate", "--problem", "p.toml", "--grid", "10"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("at byte 5"), "{err}");
    let out = pmpkit(dir.path(), &["simulate", "--problem", "missing.toml", "--grid", "10"]);
    assert_eq!(out.status.code(), Some(1));
    let out = pmpkit(dir.path(), &["simulate", "--problem", "p.toml", "--grid", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = pmpkit(dir.path(), &["explode"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = setup();
    let out = Command::new(env!("CARGO_BIN_EXE_pmpkit"))
        .args(["simulate", "--problem", "lqr.toml", "--grid", "50"])
        .current_dir(dir.path())
        .env("PMPKIT_OUT", "envout")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let traj = csv_io::read_trajectory(&std::fs::read_to_string(dir.path().join("envout/trajectory.csv")).unwrap(), 2).unwrap();
    assert_eq!(traj.grid.n_cells(), 50);
    // constant control at the box center: q1 = e^t
    assert!((traj.final_state()[0] - std::f64::consts::E).abs() < 1e-6);
}

#[test]
fn adjoint_probe_and_solve_write_their_files() {
    let dir = setup();
    let out = pmpkit(dir.path(), &["adjoint", "--problem", "lqr.toml", "--grid", "400", "--control", "u.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("o/adjoint.csv")).unwrap();
    assert!(text.starts_with("t,p1_left,p2_left,p1_right,p2_right\n"));
    assert!(text.trim_end().ends_with("1,0,1,0,1"));

    let out = pmpkit(dir.path(), &["probe", "--problem", "lqr.toml", "--grid", "100", "--rho", "0.2,0.1", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0));
    let probe = std::fs::read_to_string(dir.path().join("o/probe.csv")).unwrap();
    assert_eq!(probe.lines().count(), 3);

    let cfg = LQR.replace("n = 2", "n = 1").replace(r#"["q1 + u1", "(q1^2 + u1^2)/2"]"#, r#"["u1"]"#)
        .replace("psi = \"q2\"", "psi = \"q1\"").replace("[1.0, 0.0]", "[0.0]").replace("G = []", "G = [\"q1 - 3\"]");
    std::fs::write(dir.path().join("int.toml"), cfg).unwrap();
    let out = pmpkit(dir.path(), &["solve", "--problem", "int.toml", "--grid", "20", "--out", "s"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["control.csv", "measures.csv", "history.csv", "report.txt", "hamiltonian.csv"] {
        assert!(dir.path().join("s").join(f).exists(), "{f}");
    }
    let u = csv_io::read_control(&std::fs::read_to_string(dir.path().join("s/control.csv")).unwrap(), 1).unwrap();
    assert!(u.values.iter().all(|v| v[0] == -5.0));
}
