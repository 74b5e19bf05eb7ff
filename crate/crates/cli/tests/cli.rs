use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dumbbell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dumbbell"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_to(dir: &Path, scenario: &str, extra: &[&str]) -> Output {
    let mut args = vec!["run", scenario, "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    dumbbell(&args)
}

#[test]
fn presets_list_and_show() {
    let o = dumbbell(&["presets", "list"]);
    assert!(o.status.success());
    let names = stdout(&o);
    for n in [
        "table1_regulation",
        "table2_orientation",
        "open_loop",
        "full_gait",
        "miniature",
    ] {
        assert!(names.lines().any(|l| l == n), "missing {n}");
    }
    let o = dumbbell(&["presets", "show", "table1_regulation"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("[-0.3, -0.9, 0.9]"));
    assert_eq!(
        dumbbell(&["presets", "show", "nope"]).status.code(),
        Some(2)
    );
}

#[test]
fn run_writes_artifacts_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = run_to(a.path(), "miniature", &["--svg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("residual_omega"));
    for f in [
        "trajectory.csv",
        "summary.txt",
        "solver.csv",
        "scenario.toml",
        "omega.svg",
        "euler.svg",
        "radii.svg",
        "vx.svg",
    ] {
        assert!(a.path().join(f).is_file(), "missing {f}");
    }
    assert!(run_to(b.path(), "miniature", &[]).status.success());
    let ca = fs::read(a.path().join("trajectory.csv")).unwrap();
    let cb = fs::read(b.path().join("trajectory.csv")).unwrap();
    assert_eq!(ca, cb);

    let echoed = a.path().join("scenario.toml");
    let c = tempfile::tempdir().unwrap();
    assert!(run_to(c.path(), echoed.to_str().unwrap(), &[])
        .status
        .success());
    assert_eq!(ca, fs::read(c.path().join("trajectory.csv")).unwrap());
}

#[test]
fn compare_self_is_zero_and_truncation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_to(dir.path(), "miniature", &[]).status.success());
    let csv = dir.path().join("trajectory.csv");
    let p = csv.to_str().unwrap();
    let o = dumbbell(&["compare", p, p]);
    assert!(o.status.success());
    for line in stdout(&o).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!((f[1], f[2]), ("0", "0"), "{line}");
    }

    let text = fs::read_to_string(&csv).unwrap();
    let cut = &text[..text.len() / 2];
    let cut = &cut[..cut.rfind(',').unwrap()];
    let truncated = dir.path().join("truncated.csv");
    fs::write(&truncated, cut).unwrap();
    let o = dumbbell(&["compare", p, truncated.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    assert_eq!(
        run_to(dir.path(), empty.to_str().unwrap(), &[])
            .status
            .code(),
        Some(2)
    );

    let bad = dir.path().join("bad.toml");
    let text =
        dumbbell_preset("miniature").replace("horizon = 20", "horizon = 20\nsolve_period = 0.0123");
    fs::write(&bad, text).unwrap();
    let o = run_to(dir.path(), bad.to_str().unwrap(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solve_period"));

    assert_eq!(
        run_to(dir.path(), "no_such_preset", &[]).status.code(),
        Some(2)
    );
}

#[test]
fn non_finite_state_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blowup.toml");
    let text = dumbbell_preset("open_loop")
        .replace("t_end = 8.0", "t_end = 1.0")
        .replace("omega = [-0.3, -0.9, 0.9]", "omega = [1e300, 1e300, 1e300]");
    fs::write(&path, text).unwrap();
    let o = run_to(dir.path(), path.to_str().unwrap(), &[]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn size_reports_passing_tbm2g() {
    let o = dumbbell(&["size"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.matches("PASS").count(), 3, "{out}");
    let o = dumbbell(&[
        "size",
        "--motor-continuous-torque",
        "0.5",
        "--motor-peak-torque",
        "1.0",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("FAIL"));
    assert_eq!(dumbbell(&["size", "--legs", "0"]).status.code(), Some(2));
}

fn dumbbell_preset(name: &str) -> String {
    stdout(&dumbbell(&["presets", "show", name]))
}
