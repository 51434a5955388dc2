use std::path::Path;
use std::process::{Command, Output};

use horizon_lab::TrainConfig;

fn horizon(args: &[&str], output_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_horizon"));
    cmd.args(args).env_remove("HORIZON_OUTPUT_ROOT");
    if let Some(root) = output_root {
        cmd.env("HORIZON_OUTPUT_ROOT", root);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = TrainConfig::smoke();
    cfg.ppo.total_updates = 2;
    cfg.ppo.rollout_length = 64;
    cfg.ppo.epochs = 1;
    cfg.ppo.minibatch_size = 32;
    cfg.ppo.hidden = vec![8];
    cfg.ppo.router_hidden = vec![8];
    cfg.output_dir = dir.join("runs");
    let path = dir.join("tiny.toml");
    cfg.save(&path).unwrap();
    path
}

#[test]
fn oracle_labels_discounts() {
    let o = horizon(&["oracle", "--env", "distractor_chain", "--gamma", "0.5"], None);
    assert!(o.status.success());
    assert!(stdout(&o).contains("policy: myopic"), "{}", stdout(&o));
    let o = horizon(&["oracle", "--env", "distractor_chain", "--gamma", "0.999"], None);
    assert!(stdout(&o).contains("policy: far-sighted"));
    assert!(stdout(&o).contains("undiscounted_return: 2.5"));
}

#[test]
fn oracle_rejects_the_lander() {
    let o = horizon(&["oracle", "--env", "mini_lander", "--gamma", "0.9"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(horizon(&["train", "--config", "/nonexistent/cfg.toml"], None).status.code(), Some(2));
    assert_eq!(horizon(&["train", "--bogus"], None).status.code(), Some(2));
    assert_eq!(horizon(&["report", "--runs", ".", "--figure", "pie"], None).status.code(), Some(2));
    assert_eq!(horizon(&[], None).status.code(), Some(2));
    assert_eq!(horizon(&["--help"], None).status.code(), Some(0));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "actor_mode = \"nope\"\n[env]\nname = \"mini_lander\"\n").unwrap();
    let o = horizon(&["sweep", "--config", path.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_single_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let o = horizon(&["train", "--config", cfg.to_str().unwrap(), "--seed", "3"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("runs/attention/seed_3/diagnostics.csv").is_file());
    assert!(!dir.path().join("runs/attention/seed_0").exists());
}

#[test]
fn sweep_then_report_every_figure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let root = dir.path().join("elsewhere");
    let o = horizon(&["sweep", "--config", cfg.to_str().unwrap()], Some(&root));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("runs").exists());
    assert!(root.join("long_only/seed_1/summary.json").is_file());

    for figure in ["triad", "error", "reliability", "variance"] {
        let out = dir.path().join(format!("{figure}.svg"));
        let o = horizon(
            &["report", "--runs", root.to_str().unwrap(), "--figure", figure, "--out", out.to_str().unwrap()],
            None,
        );
        assert!(o.status.success(), "{figure}: {}", String::from_utf8_lossy(&o.stderr));
        let svg = std::fs::read_to_string(&out).unwrap();
        assert!(svg.starts_with("<svg"));
    }
    let o = horizon(&["report", "--runs", root.to_str().unwrap(), "--figure", "triad"], None);
    assert!(o.status.success());
    assert!(root.join("triad.svg").is_file());
}

#[test]
fn report_on_missing_runs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = horizon(&["report", "--runs", dir.path().to_str().unwrap(), "--figure", "triad"], None);
    assert_eq!(o.status.code(), Some(1));
}
