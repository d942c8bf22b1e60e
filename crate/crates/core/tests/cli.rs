use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
preset = "desk"
seeds = [0]
eval_episodes = 2

[env]
kind = "rrm"
num_aps = 2
num_ues = 6
episode_len = 15

[behavior]
episodes = 4
warmup_steps = 16
batch_size = 8
hidden = [8]
eval_episodes = 1

[trainer]
algo = "bcq"
mode = "independent"
epochs = 2
batch_size = 16
hidden = [8]
"#;

fn omrl(dir: &Path, config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_omrl"));
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.arg("--out").arg(dir).args(args).env("OMRL_WORKERS", "1").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn setup() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

#[test]
fn pipeline_runs_and_writes_outputs() {
    let (dir, cfg) = setup();
    let out = dir.path();
    assert_eq!(code(&omrl(out, Some(&cfg), &["collect"])), 0);
    let stream = out.join("stream.omrl");
    assert!(stream.exists() && out.join("collect.csv").exists());
    let o = omrl(out, Some(&cfg), &["subsample", "--dataset", stream.to_str().unwrap(), "--fraction", "0.25"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ds = out.join("dataset.omrl");
    assert_eq!(code(&omrl(out, Some(&cfg), &["stats", "--dataset", ds.to_str().unwrap()])), 0);
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["transitions"], 15);
    let o = omrl(out, Some(&cfg), &["train", "--dataset", ds.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // BCQ keeps its behaviour networks next to the Q-networks
    let nets = omrl::nn::load_networks(out.join("checkpoint.bin")).unwrap();
    assert_eq!(nets.len(), 4);
    let ck = out.join("checkpoint.bin");
    assert_eq!(code(&omrl(out, Some(&cfg), &["evaluate", "--checkpoint", ck.to_str().unwrap(), "--episodes", "2"])), 0);
    let eval = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    assert!(eval.lines().count() > 1);
    for b in ["full_reuse", "round_robin", "random_walk"] {
        assert_eq!(code(&omrl(out, Some(&cfg), &["evaluate", "--baseline", b, "--episodes", "1"])), 0);
    }
}

#[test]
fn config_errors_exit_2() {
    let (dir, cfg) = setup();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "bogus_key = 1\n").unwrap();
    assert_eq!(code(&omrl(dir.path(), Some(&bad), &["collect"])), 2);
    std::fs::write(&bad, "[trainer]\ngamma = 1.5\n").unwrap();
    assert_eq!(code(&omrl(dir.path(), Some(&bad), &["figure"])), 2);
    assert_eq!(code(&omrl(dir.path(), Some(&dir.path().join("missing.toml")), &["collect"])), 2);
    assert_eq!(code(&omrl(dir.path(), Some(&cfg), &["evaluate", "--baseline", "teleport"])), 2);
    // a deterministic tour needs the UAV environment
    assert_eq!(code(&omrl(dir.path(), Some(&cfg), &["evaluate", "--baseline", "deterministic"])), 2);
    assert_eq!(code(&omrl(dir.path(), None, &["no-such-command"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let (dir, cfg) = setup();
    let junk = dir.path().join("junk.omrl");
    std::fs::write(&junk, b"not a dataset").unwrap();
    assert_eq!(code(&omrl(dir.path(), Some(&cfg), &["stats", "--dataset", junk.to_str().unwrap()])), 3);
    let missing = dir.path().join("missing.omrl");
    assert_eq!(code(&omrl(dir.path(), Some(&cfg), &["train", "--dataset", missing.to_str().unwrap()])), 3);

    // dataset collected under another environment
    assert_eq!(code(&omrl(dir.path(), Some(&cfg), &["collect"])), 0);
    let other = dir.path().join("other.toml");
    std::fs::write(&other, CONFIG.replace("num_ues = 6", "num_ues = 7")).unwrap();
    let stream = dir.path().join("stream.omrl");
    assert_eq!(code(&omrl(dir.path(), Some(&other), &["train", "--dataset", stream.to_str().unwrap()])), 3);
}

#[test]
fn numeric_failures_exit_4() {
    let (dir, cfg) = setup();
    assert_eq!(code(&omrl(dir.path(), Some(&cfg), &["collect"])), 0);
    let huge = dir.path().join("huge.toml");
    std::fs::write(
        &huge,
        CONFIG.replace("epochs = 2", "epochs = 50\nadam = { lr = 1e300 }").replace("\"bcq\"", "\"dqn\""),
    )
    .unwrap();
    let stream = dir.path().join("stream.omrl");
    let o = omrl(dir.path(), Some(&huge), &["train", "--dataset", stream.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}
