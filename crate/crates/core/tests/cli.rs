use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qfilt::persist::Table;

const SHORT: &str = r#"
dim = 2
dt = 1e-3
T = 0.5
n_trajectories = 50
seed = 11
stride = 50

hamiltonian = [[0, 1, 0.5, 0.0], [1, 0, 0.5, 0.0]]
channels = [[[0, 1, 1.0, 0.0]]]
rho0 = [[0, 0, 0.5, 0.0], [1, 1, 0.5, 0.0]]

[scheme]
kind = "homodyne"

[observables]
sz = [[0, 0, -1.0, 0.0], [1, 1, 1.0, 0.0]]
"#;

fn qfilt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfilt")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_filter_reproduces_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SHORT);
    let out = qfilt(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let record = dir.path().join("record.csv");
    let out = qfilt(&[
        "filter",
        "--config",
        s(&cfg),
        "--record",
        s(&record),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let path = Table::read(&dir.path().join("path.csv")).unwrap();
    let replayed = Table::read(&dir.path().join("filter_path.csv")).unwrap();
    assert_eq!(path.columns, replayed.columns);
    assert_eq!(path.rows, replayed.rows);
    assert_eq!(path.rows.len(), 501);
    assert_eq!(path.metadata.get("seed"), Some("11"));
    assert!(path.metadata.get("config_hash").is_some_and(|h| h.len() == 64));

    let out = qfilt(&[
        "filter",
        "--config",
        s(&cfg),
        "--record",
        s(&record),
        "--out",
        s(dir.path()),
        "--filter",
        "zakai",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let zakai = Table::read(&dir.path().join("filter_path.csv")).unwrap();
    let likelihood = zakai.column("likelihood").unwrap();
    assert_eq!(likelihood[0], 1.0);
    assert!(likelihood.iter().all(|l| *l > 0.0));
}

#[test]
fn seed_flag_changes_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SHORT);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        qfilt(&["simulate", "--config", s(&cfg), "--out", s(&a)]).status.code(),
        Some(0)
    );
    assert_eq!(
        qfilt(&["simulate", "--config", s(&cfg), "--out", s(&b), "--seed", "12"])
            .status
            .code(),
        Some(0)
    );
    let ra = fs::read_to_string(a.join("record.csv")).unwrap();
    let rb = fs::read_to_string(b.join("record.csv")).unwrap();
    assert_ne!(ra, rb);
    assert!(rb.contains("# seed: 12\n"));
}

#[test]
fn ensemble_and_master_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        &SHORT.replace("n_trajectories = 50", "n_trajectories = 400"),
    );
    assert_eq!(
        qfilt(&["ensemble", "--config", s(&cfg), "--out", s(dir.path())])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        qfilt(&["master", "--config", s(&cfg), "--out", s(dir.path())])
            .status
            .code(),
        Some(0)
    );
    let ens = Table::read(&dir.path().join("ensemble.csv")).unwrap();
    let master = Table::read(&dir.path().join("master.csv")).unwrap();
    assert_eq!(ens.metadata.get("n_trajectories"), Some("400"));
    let mean = ens.column("Re⟨sz⟩").unwrap();
    let err = ens.column("stderr_Re⟨sz⟩").unwrap();
    let exact = master.column("Re⟨sz⟩").unwrap();
    assert_eq!(mean.len(), exact.len());
    for i in 1..mean.len() {
        assert!(
            (mean[i] - exact[i]).abs() <= 4.0 * err[i],
            "row {i}: {} vs {}",
            mean[i],
            exact[i]
        );
    }
}

#[test]
fn invalid_hamiltonian_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SHORT.replace("[1, 0, 0.5, 0.0]]", "[1, 0, 0.7, 0.0]]");
    let cfg = write_config(dir.path(), "bad.toml", &bad);
    let out = qfilt(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hamiltonian"));
    assert!(!dir.path().join("record.csv").exists());
}

#[test]
fn unknown_keys_and_missing_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "typo.toml", &format!("dtt = 1.0\n{SHORT}"));
    let out = qfilt(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dtt"));
    let missing = dir.path().join("nope.toml");
    assert_eq!(qfilt(&["master", "--config", s(&missing)]).status.code(), Some(1));
    assert_eq!(qfilt(&["simulate"]).status.code(), Some(1));
}

#[test]
fn record_from_another_scheme_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let counting = write_config(
        dir.path(),
        "count.toml",
        &format!(
            "positivity_floor = -1e-2\n{}",
            SHORT.replace("kind = \"homodyne\"", "kind = \"counting\"")
        ),
    );
    let homodyne = write_config(dir.path(), "run.toml", SHORT);
    assert_eq!(
        qfilt(&["simulate", "--config", s(&counting), "--out", s(dir.path())])
            .status
            .code(),
        Some(0)
    );
    let record = dir.path().join("record.csv");
    let out = qfilt(&[
        "filter",
        "--config",
        s(&homodyne),
        "--record",
        s(&record),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("record"));
}

#[test]
fn positivity_breach_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "count.toml",
        &SHORT.replace("kind = \"homodyne\"", "kind = \"counting\""),
    );
    let out = qfilt(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("positivity"));
}

#[test]
fn verify_passes() {
    let out = qfilt(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            qfilt::config::RunConfig::load(&path).unwrap();
            n += 1;
        }
    }
    assert!(n >= 3);
}
