use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cqsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqsim")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_configs_validate() {
    for entry in fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        let o = cqsim(&["validate", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", p.display(), stderr(&o));
    }
}

#[test]
fn missing_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.toml", "preset = \"custom\"\npipeline = \"flow\"\n[physics]\nomega0 = 5\nlambda = 0\ntheta = 0.3\n[numerics]\ndt = 0.001\nt_end = 1\n");
    let o = cqsim(&["run", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing key `a0`"), "{}", stderr(&o));
}

#[test]
fn oversized_step_is_a_config_fault() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.toml", "preset = \"fig1\"\n[numerics]\ndt = 0.2\n");
    let o = cqsim(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("numerics.dt"));
}

#[test]
fn locked_override_points_at_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.toml", "preset = \"fig2b\"\n[numerics]\nn_traj = 10\n");
    let o = cqsim(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3") && stderr(&o).contains("locked"), "{}", stderr(&o));
}

#[test]
fn numerical_precondition_exits_with_numerical_code() {
    // The asymptotic region is entered less than one oscillation before t_end.
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.toml", "preset = \"fig1\"\n[numerics]\nt_end = 5.1\n");
    let o = cqsim(&["run", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("fokker_planck"), "{}", stderr(&o));
}

#[test]
fn fig1_writes_theta_labelled_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let o = cqsim(&["run", configs().join("fig1.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS dwell ordering") && !stdout.contains("FAIL"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("fig1_p1.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config: preset=fig1"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 4);
    assert!(header[1..].iter().all(|h| h.starts_with("P1_theta=")));
    assert!(fs::read_to_string(dir.path().join("fig1_p1.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn presets_are_self_contained_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let bare = write(dir.path(), "bare.toml", "preset = \"fig2a\"\n");
    let run = |cfg: &Path, out: &str, extra: &[&str]| {
        let out = dir.path().join(out);
        let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = cqsim(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("fig2a_compare.csv")).unwrap()
    };
    let full = run(&configs().join("fig2a.toml"), "a", &[]);
    assert_eq!(full, run(&bare, "b", &["--threads", "3"]));
    assert_eq!(full, run(&bare, "c", &["--threads", "1"]));
    assert_ne!(full, run(&bare, "d", &["--seed", "2"]));
}
