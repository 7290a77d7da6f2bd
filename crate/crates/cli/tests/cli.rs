use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn delearn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delearn"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TOY: &str = r#"
name = "toy"
kind = "learn"

[integrator]
step = 0.01
horizon = 10.0

[estimator]
alpha = 1.0
beta = 1.0
gamma = 1.0
delta = 1.0
kappa = 1.0

[regressor]
theta = [1.0, 2.0]
channels = [
    { terms = [{ amplitude = 1.0, frequency = 1.0 }] },
    { terms = [{ amplitude = -1.0, frequency = 1.0 }] },
]

[output]
columns = ["err", "sub_err"]
"#;

#[test]
fn figure_preset_writes_csv_svg_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = delearn(&["run", "fig1", "--horizon", "5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,sub_err"));
    assert_eq!(csv.lines().count(), 1 + 501);
    let svg = fs::read_to_string(dir.path().join("fig1.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    assert!(stdout(&o).contains("final_sub_err"));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = delearn(&["run", "--preset", "fig3", "--horizon", "3", "--seed", "9", "--no-svg"], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let x = fs::read(a.path().join("fig3.csv")).unwrap();
    let y = fs::read(b.path().join("fig3.csv")).unwrap();
    assert_eq!(x, y);

    let c = tempfile::tempdir().unwrap();
    delearn(&["run", "fig3", "--horizon", "3", "--seed", "10", "--no-svg"], c.path());
    assert_ne!(x, fs::read(c.path().join("fig3.csv")).unwrap());
}

#[test]
fn config_file_runs_and_no_svg_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.toml");
    fs::write(&path, TOY).unwrap();
    let o = delearn(&["run", "--config", path.to_str().unwrap(), "--no-svg"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("toy.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,err,sub_err"));
    assert!(!dir.path().join("toy.svg").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, TOY.replace("kappa = 1.0", "kappa = 1.0\nlambda = 2.0")).unwrap();
    let o = delearn(&["run", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("lambda") && err.contains("line"), "{err}");

    let o = delearn(&["run", "fig7"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown preset"));

    let o = delearn(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = delearn(&["run", "app1_k1", "--step", "0.007"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = delearn(&["run", "app1_k1", "--step", "0.5", "--no-svg"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("learner"), "{}", stderr(&o));
}

#[test]
fn verify_runs_selected_suites() {
    let dir = tempfile::tempdir().unwrap();
    let o = delearn(&["run", "verify", "--suite", "rk4-order", "--suite", "graph-positivity"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("PASS  rk4-order") && text.contains("2 of 2 suites passed"), "{text}");

    let path = dir.path().join("verify.toml");
    fs::write(&path, "name = \"v\"\nkind = \"verify\"\n[integrator]\nstep = 0.1\nhorizon = 1.0\n[estimator]\nalpha = 1.0\nbeta = 1.0\ngamma = 1.0\ndelta = 1.0\nkappa = 1.0\n").unwrap();
    let o = delearn(&["run", "--config", path.to_str().unwrap(), "--suite", "grid-oracle"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let o = delearn(&["run", "verify", "--suite", "nonexistent"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn show_prints_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_delearn")).args(["show", "fig9"]).output().unwrap();
    assert!(o.status.success());
    let path = dir.path().join("fig9.toml");
    fs::write(&path, &o.stdout).unwrap();
    let o = delearn(&["run", "--config", path.to_str().unwrap(), "--horizon", "2", "--no-svg"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("fig9.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,err1,err2,err3,err4,err5"));

    let o = Command::new(env!("CARGO_BIN_EXE_delearn")).arg("list").output().unwrap();
    let text = stdout(&o);
    assert!(text.contains("app2") && text.contains("fig8") && text.contains("ltv-harness"));
}
