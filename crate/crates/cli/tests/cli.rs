use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evoesn::experiment::{read_results, ExperimentConfig, Protocol, CHECKPOINT_FILE, MODEL_FILE};
use evoesn::timeseries::Splits;

fn evoesn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evoesn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().skip(1).count()
}

fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::preset("mgs").unwrap();
    cfg.task.len = Some(1500);
    cfg.task.splits = Some(Splits::new(200, 800, 300, 200));
    cfg.task.protocol = Protocol::FreeRun {
        warmup: 100,
        horizon: 84,
        step: 84,
    };
    cfg.esn.units = 40;
    let ga = cfg.ga.as_mut().unwrap();
    ga.population_size = 4;
    ga.generations = 4;
    ga.coefficients = 10;
    ga.fitness.n_tasks = 2;
    ga.fitness.horizon = 20;
    cfg.run.repeats = 2;
    cfg.run.checkpoint_every = 1;
    let path = dir.join("small.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn generate_mgs_writes_requested_length() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mgs.csv");
    let o = evoesn(&["generate", "mgs", "--tau", "17", "--len", "6084", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_lines(&out), 6084);
    assert!(stdout(&o).contains("6084 points"));
}

#[test]
fn generate_lorenz_reports_splits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lorenz.csv");
    let o = evoesn(&["generate", "lorenz", "--len", "8600", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(data_lines(&out), 8600);
    assert!(stdout(&o).contains("washout 1000 train 6000 validate 1000 test 600"), "{}", stdout(&o));
}

#[test]
fn generate_sunspot_from_bundled_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ss.csv");
    let input = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/sunspot_month_1749_2013.csv");
    let o = evoesn(&["generate", "sunspot", "--input", input, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(data_lines(&out), 3177);
}

#[test]
fn invalid_task_is_a_usage_error() {
    let o = evoesn(&["generate", "henon", "--len", "10", "--out", "x.csv"]);
    assert!(!o.status.success());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "name = \"x\"\nbogus = 1\n").unwrap();
    let o = evoesn(&["baseline", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = evoesn(&["baseline", "--preset", "nope", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn baseline_and_grid_write_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("base");
    let o = evoesn(&["baseline", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("nrmse: mean"));
    assert_eq!(read_results(&out).unwrap().seeds, vec![5, 6]);

    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text.push_str("\n[grid]\nleak_rate = [0.5, 1.0]\n");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("grid");
    let o = evoesn(&["grid", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4);
}

#[test]
fn evolve_stop_resume_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg_s = cfg.to_str().unwrap();

    let straight = dir.path().join("straight");
    let o = evoesn(&["evolve", "--config", cfg_s, "--out", straight.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let split = dir.path().join("split");
    let o = evoesn(&["evolve", "--config", cfg_s, "--out", split.to_str().unwrap(), "--stop-after", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("stopped early"));
    assert!(split.join(CHECKPOINT_FILE).is_file());
    assert!(!split.join(MODEL_FILE).exists());
    let o = evoesn(&["resume", "--out", split.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let a = read_results(&straight).unwrap();
    let b = read_results(&split).unwrap();
    assert!(a.records[0].same_results(&b.records[0], 1e-12));

    let eval = dir.path().join("eval");
    let model = split.join(MODEL_FILE);
    let o = evoesn(&[
        "evaluate",
        "--config",
        cfg_s,
        "--model",
        model.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e = read_results(&eval).unwrap();
    let want = b.records[0].metric("nrmse").unwrap();
    assert!((e.records[0].metric("nrmse").unwrap() - want).abs() <= 1e-12 * want);
}

#[test]
fn resume_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = evoesn(&["resume", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
