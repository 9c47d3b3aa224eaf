//! End-to-end runs of the `vahedge` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vahedge::RunConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vahedge"))
}

fn quick() -> RunConfig {
    let mut c = RunConfig::baseline();
    c.seed = 11;
    c.trainer.total_timesteps = 1200;
    c.evaluation.scenarios = 100;
    c.benchmarks.heston_paths = 10_000;
    c.online.eval_scenarios = 20;
    c.sensitivity.overrides = vec!["sigma=0.1".into()];
    c
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, cfg.to_toml().unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn single_line_error(out: &Output) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));
    err
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn calibrate_prints_and_writes_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &quick());
    let text = ok(&run(&["calibrate", "--config", cfg_path.to_str().unwrap()]));
    let me: f64 = text.trim().strip_prefix("rider_rate ").unwrap().parse().unwrap();
    assert!((0.018..=0.020).contains(&me), "{me}");
    ok(&run(&["calibrate", "--write", "--config", cfg_path.to_str().unwrap()]));
    let stored = RunConfig::load(&cfg_path).unwrap();
    assert!((stored.actuarial.rider_rate.unwrap() - me).abs() < 1e-9);
}

#[test]
fn calibrate_small_guarantee_is_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick();
    cfg.actuarial.guarantee = 1e-3;
    let cfg_path = write_config(dir.path(), &cfg);
    let out = run(&["calibrate", "--config", cfg_path.to_str().unwrap()]);
    match out.status.success() {
        true => {
            let me: f64 = String::from_utf8(out.stdout).unwrap().trim()[11..].parse().unwrap();
            assert!(me < 1e-6, "{me}");
        }
        // No positive root: the error names the failure on one line.
        false => {
            single_line_error(&out);
        }
    }
}

#[test]
fn malformed_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "seed = 1\n[market]\nr = \n").unwrap();
    let err = single_line_error(&run(&["calibrate", "--config", p.to_str().unwrap()]));
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn train_writes_artifacts_and_resume_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &quick());
    let c = cfg_path.to_str().unwrap();
    let (a, b, r1, r2) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("r1"), dir.path().join("r2"));
    for d in [&a, &b, &r1, &r2] {
        std::fs::create_dir(d).unwrap();
    }
    ok(&run(&["train", "--config", c, "--out", a.to_str().unwrap()]));
    ok(&run(&["train", "--config", c, "--out", b.to_str().unwrap()]));
    let wa = std::fs::read(a.join("weights.bin")).unwrap();
    assert_eq!(wa, std::fs::read(b.join("weights.bin")).unwrap());
    let log = csv_rows(&a.join("training_log.csv"));
    assert_eq!(log.len(), 20);
    assert_eq!(&log[19][1], "1200");

    let w = a.join("weights.bin");
    for d in [&r1, &r2] {
        ok(&run(&["train", "--config", c, "--weights", w.to_str().unwrap(), "--out", d.to_str().unwrap()]));
    }
    assert_eq!(std::fs::read(r1.join("training_log.csv")).unwrap(), std::fs::read(r2.join("training_log.csv")).unwrap());
    assert_ne!(std::fs::read(r1.join("weights.bin")).unwrap(), wa);

    // A different seed trains a different agent.
    ok(&run(&["train", "--config", c, "--seed", "12", "--out", b.to_str().unwrap()]));
    assert_ne!(std::fs::read(b.join("weights.bin")).unwrap(), wa);
}

#[test]
fn train_into_missing_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &quick());
    let missing = dir.path().join("nope");
    let err = single_line_error(&run(&["train", "--config", cfg_path.to_str().unwrap(), "--out", missing.to_str().unwrap()]));
    assert!(err.contains("does not exist"), "{err}");
}

#[test]
fn evaluate_hedgers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &quick());
    let c = cfg_path.to_str().unwrap();
    let o = dir.path().to_str().unwrap();
    let text = ok(&run(&["evaluate", "--config", c, "--hedger", "zero", "--out", o, "--threads", "2"]));
    assert!(text.starts_with("zero "));
    let pnls = csv_rows(&dir.path().join("pnl_zero.csv"));
    assert_eq!(pnls.len(), 100);
    let stats = csv_rows(&dir.path().join("stats_zero.csv"));
    assert_eq!(stats.len(), 1);

    ok(&run(&["evaluate", "--config", c, "--hedger", "cfm-bs", "--out", o, "--threads", "1"]));
    let one = std::fs::read(dir.path().join("pnl_cfm-bs.csv")).unwrap();
    ok(&run(&["evaluate", "--config", c, "--hedger", "cfm-bs", "--out", o, "--threads", "3"]));
    assert_eq!(one, std::fs::read(dir.path().join("pnl_cfm-bs.csv")).unwrap(), "thread count changes results");
    assert_eq!(csv_rows(&dir.path().join("ecdf_cfm-bs.csv")).len(), 100);

    let usage = run(&["evaluate", "--config", c, "--hedger", "gamma", "--out", o]);
    assert_eq!(usage.status.code(), Some(2));
    single_line_error(&run(&["evaluate", "--config", c, "--hedger", "rl", "--out", o]));
}

#[test]
fn compare_online_and_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &quick());
    let c = cfg_path.to_str().unwrap();
    let o = dir.path().to_str().unwrap();
    ok(&run(&["train", "--config", c, "--out", o]));
    let w = dir.path().join("weights.bin");
    let w = w.to_str().unwrap();

    ok(&run(&["compare", "--config", c, "--weights", w, "--hedger", "cfm-bs", "--out", o]));
    assert_eq!(csv_rows(&dir.path().join("stats.csv")).len(), 2);
    let pair = csv_rows(&dir.path().join("pairwise.csv"));
    assert_eq!(&pair[0][0], "cfm-bs");

    ok(&run(&["online", "--config", c, "--weights", w, "--out", o]));
    let rows = csv_rows(&dir.path().join("online.csv"));
    assert_eq!(rows.len(), 21);
    assert_eq!(&rows[20][1], "600");
    ok(&run(&["online", "--config", c, "--weights", w, "--out", o, "--no-learning"]));
    let frozen = csv_rows(&dir.path().join("online_frozen.csv"));
    assert_eq!(frozen.len(), 21);
    assert_eq!(rows[0], frozen[0]);
    assert_ne!(rows[20][3], frozen[20][3]);

    ok(&run(&["sensitivity", "--config", c, "--out", o]));
    let sens = csv_rows(&dir.path().join("sensitivity.csv"));
    assert_eq!(sens.len(), 2);
    assert_eq!((&sens[0][0], &sens[0][2], &sens[1][2]), ("sigma", "rl", "cfm-bs"));
}

#[test]
fn sensitivity_override_lists() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let mut cfg = quick();
    cfg.trainer.total_timesteps = 120;
    cfg.evaluation.scenarios = 10;
    cfg.sensitivity.overrides.clear();
    let c = write_config(dir.path(), &cfg);
    ok(&run(&["sensitivity", "--config", c.to_str().unwrap(), "--out", o]));
    let sens = csv_rows(&dir.path().join("sensitivity.csv"));
    assert_eq!(sens.len(), 2);
    assert_eq!(&sens[0][0], "base");

    cfg.sensitivity.overrides = vec!["rho=1.2".into()];
    let c = write_config(dir.path(), &cfg);
    let err = single_line_error(&run(&["sensitivity", "--config", c.to_str().unwrap(), "--out", o]));
    assert!(err.contains("unknown override key"), "{err}");
}
