use std::fs;
use std::process::Command;

use cutwave::output::{RESULT_HEADER, SPECTRUM_HEADER};

fn cutwave() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cutwave"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

#[test]
fn rod_spectrum_writes_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let status = cutwave().args(["rod-spectrum", "--out"]).arg(dir.path()).arg("stabilization=gevs-mass").status().unwrap();
    assert!(status.success());
    let text = fs::read_to_string(dir.path().join("rod_spectrum.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SPECTRUM_HEADER));
    // fitted and gevs-mass, both ends, 101 or 100 modes each
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 101 + 101 + 100 + 101);
    assert!(body.iter().all(|l| l.split(',').count() == 10));
}

#[test]
fn convergence_run_with_field_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let status = cutwave()
        .args(["rod-convergence", "--fast", "--dump-field", "--out"])
        .arg(dir.path())
        .args(["degrees=2", "n_el=10,20", "bc=neumann"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(dir.path().join("rod_convergence.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], RESULT_HEADER);
    assert_eq!(lines.len(), 1 + 4);
    let mut errors = Vec::new();
    for l in &lines[1..] {
        let fields: Vec<&str> = l.split(',').collect();
        assert_eq!(fields.len(), 12);
        assert_eq!(fields[11], "ok");
        errors.push(fields[8].parse::<f64>().unwrap());
    }
    // rows are fitted n10, n20, then gevs-mass n10, n20
    assert!(errors[1] < errors[0] && errors[3] < errors[2], "{errors:?}");
    let dumps = fs::read_dir(dir.path().join("fields")).unwrap().count();
    assert_eq!(dumps, 4);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small sweep\ndegrees = 1\nsweep_n_el = 10\ncut_fractions = 1e-1, 1e-3\nbc = dirichlet\nmax_steps = 0\n").unwrap();
    let status = cutwave().args(["rod-cutsweep", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert!(status.success());
    let text = fs::read_to_string(dir.path().join("rod_cutsweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ends_with(",dt_only")));
}

#[test]
fn invalid_configuration_exits_with_1() {
    let out = cutwave().args(["rod-spectrum", "degrees=0", "alpha=2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.matches("config error:").count() >= 2, "{stderr}");
    let out = cutwave().args(["rod-spectrum", "nonsense=1", "bc"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stderr).matches("config error:").count(), 2);
}

#[test]
fn selftest_passes() {
    let out = cutwave().args(["selftest", "--seed", "3"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
