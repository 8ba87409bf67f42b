use std::path::Path;
use std::process::{Command, Output};

use chdg_core::diagnostics::read_timeseries;

fn chdg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chdg")).args(args).output().expect("spawn chdg")
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--case", "manufactured", "--set", "mesh.n=4", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    chdg(&args)
}

#[test]
fn unknown_case_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = chdg(&["run", "--case", "nope", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in chdg_core::cases::CASE_NAMES {
        assert!(err.contains(name), "missing {name} in {err}");
    }
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--set", "mesh.nz=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mesh.nz"));
}

#[test]
fn missing_config_file_is_a_validation_error() {
    let out = chdg(&["run", "--config", "/nonexistent/chdg.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manufactured_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--set", "output.vtk_every=5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("10 accepted steps"), "{stdout}");

    let records = read_timeseries(&dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(records.iter().filter(|r| r.accepted && r.step > 0).count(), 10);
    for f in ["manifest.txt", "vtk/phi_00000.vtk", "vtk/phi_00005.vtk", "vtk/phi_00010.vtk", "vtk/phi_final.vtk"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let out = small_run(first.path(), &["--set", "eps=0.2", "--set", "dt=0.002"]);
    assert!(out.status.success());
    let manifest = first.path().join("manifest.txt");
    let out = chdg(&["run", "--config", manifest.to_str().unwrap(), "--out", second.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let a = read_timeseries(&first.path().join("timeseries.csv")).unwrap();
    let b = read_timeseries(&second.path().join("timeseries.csv")).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        let (mut x, mut y) = (*x, *y);
        x.wall_seconds = 0.0;
        y.wall_seconds = 0.0;
        assert_eq!(x, y);
    }
    assert_eq!(
        std::fs::read_to_string(&manifest).unwrap(),
        std::fs::read_to_string(second.path().join("manifest.txt")).unwrap()
    );
}
