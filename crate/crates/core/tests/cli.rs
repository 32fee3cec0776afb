use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_conley-flow")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn spectrum_of_positive_operators() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectrum"], &config("null.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("m=0 m'=0 certified"));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("verdict: pass"));
}

#[test]
fn certify_rejects_overstated_dissipativity() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["certify"], &config("linear_decay_nu2.toml"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL  dissipativity"));
}

#[test]
fn heteroclinic_scenario_reports_two_connections() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["heteroclinic", "--override", "grid.n_interior=399"],
        &config("scenario.toml"),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("connections.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# conley-flow "));
    assert_eq!(
        lines[1],
        "source,target,direction,sign,energy_drop,closeness,steps"
    );
    assert_eq!(lines.len(), 4);
}

#[test]
fn heteroclinic_null_scenario_is_falsified() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["heteroclinic", "--override", "grid.n_interior=199"],
        &config("null.toml"),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stdout(&o).contains("no unstable direction"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "evolve",
        "--override",
        "grid.n_interior=199",
        "--override",
        "run.t_final=2",
    ];
    for d in [&a, &b] {
        assert_eq!(
            run(&args, &config("scenario.toml"), d.path()).status.code(),
            Some(0)
        );
    }
    for f in ["trajectory.csv", "summary.txt"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn invalid_configs_exit_with_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "spectrum",
            "--override",
            "run.dt=0",
            "--override",
            "grid.half_width=-1",
        ],
        &config("null.toml"),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.dt") && err.contains("grid"), "{err}");

    let o = run(
        &["spectrum", "--override", "run.typo=1"],
        &config("null.toml"),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}
