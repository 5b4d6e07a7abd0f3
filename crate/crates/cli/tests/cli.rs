use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
snr_db_list = [20.0]
miss_frac_list = [0.1]
n_trials = 2
n_steps = 2
methods = ["proposed", "omp_baseline"]
seed = 11
ber_bits = 1000
workers = 2
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmwave-rank")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = cli(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--methods", "proposed"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(csv.lines().skip(1).all(|l| l.contains(",proposed,")));
    let manifest = std::fs::read_to_string(out.join("run.json")).unwrap();
    assert!(manifest.contains("config_sha256"));
    assert!(out.join("summary.csv").exists());
}

#[test]
fn sweep_labels_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = cli(&["sweep", "--axis", "snr", "--values", "-5,15", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("snr,-5,")));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "n_trials = 1\nunknown_key = 3\n");
    let out = dir.path().join("out");
    assert_eq!(cli(&["run", "--config", &bad, "--out", out.to_str().unwrap()]).status.code(), Some(2));
    let good = write_config(dir.path(), SMALL);
    assert_eq!(cli(&["run", "--config", &good, "--out", out.to_str().unwrap(), "--methods", "nope"]).status.code(), Some(2));
    assert_eq!(
        cli(&["sweep", "--axis", "bogus", "--values", "1", "--config", &good, "--out", out.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(cli(&["run", "--config", "/nonexistent.toml", "--out", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = cli(&["run", "--config", &cfg, "--out", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["selftest", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    assert!(dir.path().join("results.csv").exists());
}
