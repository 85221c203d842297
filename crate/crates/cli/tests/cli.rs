use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 4

[env]
id = "noisy_integrator"

[model]
ensemble_size = 2
num_layers = 1
hidden_size = 8

[planner]
horizon = 4
num_samples = 12
particles = 4
elite_size = 3
opt_iterations = 2

[schedule]
iterations = 1
rollouts_per_iter = 2
rollout_length = 5
fit_epochs = 2

[evaluation]
episodes = 2
"#;

fn riskcem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskcem")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn train_eval_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    let out = riskcem(&["train", "--config", &cfg, "--out", run_s, "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["run.csv", "model.ckpt", "summary.json", "episodes/iter000_ep01.csv"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let summary = std::fs::read_to_string(run.join("summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 9"));

    let ckpt = run.join("model.ckpt");
    let eval = dir.path().join("eval");
    let out = riskcem(&[
        "eval",
        "--config",
        &cfg,
        "--seed",
        "9",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(eval.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().last().unwrap().starts_with("summary,"));

    let out = riskcem(&["inspect-model", ckpt.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("state_dim      3"));
    assert!(text.contains("ensemble_size  2"));
}

#[test]
fn invalid_configs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{TINY}\n[extra]\nx = 1\n"));
    let out = riskcem(&["train", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(dir.path(), TINY);
    let out = riskcem(&["train", "--config", &cfg, "--override", "planner.elite_size=99", "--out", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = riskcem(&["inspect-model", dir.path().join("missing.ckpt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out_dir = dir.path().join("sweep");
    let out = riskcem(&[
        "sweep",
        "--config",
        &cfg,
        "--grid",
        "planner.w_epistemic=0,0.05",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("point_000/run.csv").exists());
    assert!(out_dir.join("point_001/run.csv").exists());
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("point,planner.w_epistemic,status,iteration"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            riskcem::harness::ExperimentConfig::load(&path, &[]).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert_eq!(n, 3);
}
