use std::fs;
use std::path::Path;
use std::process::Command;

use olm_core::vtk::NodalField;

fn olm(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_olm-stokes")).args(args).arg("--out").arg(dir).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = olm(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn convergence_csv_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["convergence", "--levels", "2", "--threads", "1"]);
    ok(b.path(), &["convergence", "--levels", "2", "--threads", "1"]);
    let ca = fs::read(a.path().join("convergence.csv")).unwrap();
    let cb = fs::read(b.path().join("convergence.csv")).unwrap();
    assert_eq!(ca, cb);

    let text = String::from_utf8(ca).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "level,h_max,ndofs,err_u_h1,err_u_l2,err_p_l2,err_jump");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("# slope_u_h1="));
    assert!(lines[4].contains(" slope_p_l2="));
    for row in &lines[1..4] {
        assert_eq!(row.split(',').count(), 7);
    }
}

#[test]
fn threaded_and_sequential_runs_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["condition", "--l", "0.21,0.2001", "--threads", "1"]);
    ok(b.path(), &["condition", "--l", "0.21,0.2001", "--threads", "3"]);
    assert_eq!(fs::read(a.path().join("condition.csv")).unwrap(), fs::read(b.path().join("condition.csv")).unwrap());
}

#[test]
fn condition_and_infsup_headers() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["condition", "--l", "0.21"]);
    ok(dir.path(), &["infsup", "--l", "0.21"]);
    let cond = fs::read_to_string(dir.path().join("condition.csv")).unwrap();
    let inf = fs::read_to_string(dir.path().join("infsup.csv")).unwrap();
    let cl: Vec<&str> = cond.lines().collect();
    assert_eq!(cl[0], "l,N,M,with_sh,kappa,kappa_h2");
    assert!(cl[1].starts_with("0.21,5,3,true,"));
    assert!(cl[2].starts_with("0.21,5,3,false,"));
    let il: Vec<&str> = inf.lines().collect();
    assert_eq!(il[0], "l,with_sh,c_infsup");
    assert_eq!(il.len(), 3);
}

#[test]
fn patch_solve_writes_exact_fields() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["solve", "--case", "patch", "--n", "8", "--m", "4", "--l", "0.27", "--angle", "0.4"]);
    for name in ["background.vtk", "overlapping.vtk"] {
        let f = NodalField::read_legacy(fs::read(dir.path().join(name)).unwrap().as_slice()).unwrap();
        assert!(!f.cells.is_empty());
        for (p, v) in f.points.iter().zip(&f.velocity) {
            assert!((v[0] - p.y).abs() < 1e-9 && (v[1] - p.x).abs() < 1e-9, "{name}: {p:?} {v:?}");
        }
    }
}

#[test]
fn zero_data_gives_zero_fields_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["solve", "--case", "zero", "--l", "0.3", "--dump-matrix", "--dump-geometry", "--kappa"]);
    let f = NodalField::read_legacy(fs::read(dir.path().join("background.vtk")).unwrap().as_slice()).unwrap();
    assert!(f.velocity.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    assert!(f.pressure.iter().all(|&p| p == 0.0));
    let mtx = fs::read_to_string(dir.path().join("solve_matrix.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real general"));
    assert!(dir.path().join("solve_pieces.csv").exists());
    assert!(dir.path().join("solve_segments.csv").exists());
}

#[test]
fn manufactured_solve_output_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = olm(dir.path(), &["solve", "--l", "0.25", "--n", "10", "--m", "5"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("residual="));
    for name in ["background.vtk", "overlapping.vtk"] {
        let f = NodalField::read_legacy(fs::read(dir.path().join(name)).unwrap().as_slice()).unwrap();
        assert_eq!(f.points.len(), f.velocity.len());
        assert!(f.pressure.iter().all(|p| p.is_finite()));
    }
}

#[test]
fn invalid_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["condition", "--l", "0.1"][..],
        &["convergence", "--levels", "0"],
        &["solve", "--gamma", "0"],
        &["solve", "--delta", "-1"],
        &["bogus"],
    ] {
        let out = olm(dir.path(), args);
        assert!(!out.status.success(), "{args:?} should fail");
    }
}
