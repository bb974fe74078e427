use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cheq_core::{AgentConfig, Variant, WeightConfig};
use cheq_harness::logs::{Table, CHECKPOINT_DIR, EPISODES_CSV, EVAL_CSV, STEPS_CSV, UPDATES_CSV};
use cheq_harness::transfer::{PRIOR_CSV, TRANSFER_CSV};
use cheq_harness::{EnvSpec, RunConfig, Summary, TrackSpec};
use cheq_env::{CartPoleParams, RacingConfig, TrackGenParams};

fn cheq(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cheq"));
    cmd.args(args).env_remove("CHEQ_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("CHEQ_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn tiny_cartpole() -> RunConfig {
    RunConfig {
        label: "tiny".into(),
        env: EnvSpec::CartPole {
            params: CartPoleParams::default(),
        },
        variant: Variant::Cheq {
            weights: WeightConfig::default(),
        },
        agent: AgentConfig {
            hidden: vec![16, 16],
            batch_size: 32,
            learning_starts: 100,
            lambda_warmup_steps: 300,
            ..Default::default()
        },
        total_steps: 600,
        eval_every_episodes: 3,
        checkpoint_every: Some(300),
        ..RunConfig::default()
    }
}

fn tiny_racing() -> RunConfig {
    let mut config = RacingConfig::default();
    config.sim.max_episode_steps = 40;
    RunConfig {
        label: "tiny-racing".into(),
        env: EnvSpec::Racing {
            config,
            track: TrackSpec::Generated {
                seed: 0,
                params: TrackGenParams::default(),
            },
        },
        agent: AgentConfig {
            hidden: vec![8, 8],
            batch_size: 16,
            learning_starts: 50,
            lambda_warmup_steps: 100,
            ..Default::default()
        },
        total_steps: 200,
        checkpoint_every: Some(20),
        ..RunConfig::default()
    }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn error_kind(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap_or_else(|_| panic!("not json: {text}"));
    v["error"]["kind"].as_str().unwrap().to_owned()
}

#[test]
fn validate_config_accepts_defaults_and_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), &RunConfig::default());
    let out = cheq(&["validate-config", "--config", good.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for profile in cheq_harness::PROFILES {
        assert!(cheq(&["validate-config", "--profile", profile], None).status.success());
    }

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 1, "agent": {"subset_size": 9}}"#).unwrap();
    let out = cheq(&["validate-config", "--config", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "invalid_config");

    std::fs::write(&bad, r#"{"schema_version": 1, "mystery": 3}"#).unwrap();
    let out = cheq(&["validate-config", "--config", bad.to_str().unwrap()], None);
    assert!(!out.status.success());
    assert_eq!(error_kind(&out), "json");

    std::fs::write(&bad, r#"{"schema_version": 99}"#).unwrap();
    assert_eq!(error_kind(&cheq(&["validate-config", "--config", bad.to_str().unwrap()], None)), "invalid_config");

    let out = cheq(&["train", "--profile", "paper", "--frobnicate"], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");

    let out = cheq(&["eval", "--checkpoint", dir.path().join("nowhere").to_str().unwrap()], None);
    assert!(!out.status.success());
    assert_eq!(error_kind(&out), "missing_checkpoint");
}

#[test]
fn training_logs_are_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &tiny_cartpole());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for root in [&a, &b] {
        let out = cheq(&["train", "--config", cfg_path.to_str().unwrap()], Some(root));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let run_a = a.join("tiny/seed-0");
    let run_b = b.join("tiny/seed-0");
    for name in [STEPS_CSV, EPISODES_CSV, EVAL_CSV, UPDATES_CSV, "summary.json"] {
        assert_eq!(std::fs::read(run_a.join(name)).unwrap(), std::fs::read(run_b.join(name)).unwrap(), "{name}");
    }

    let steps = Table::read(&run_a.join(STEPS_CSV)).unwrap();
    assert_eq!(steps.rows.len(), 600);
    let idx = steps.column("step").unwrap();
    assert!(idx.iter().enumerate().all(|(i, s)| *s == (i + 1) as f64));
    let episodes = Table::read(&run_a.join(EPISODES_CSV)).unwrap();
    let cum = episodes.column("cum_failures").unwrap();
    assert!(cum.windows(2).all(|w| w[1] >= w[0]));
    let fails: f64 = episodes.column("failure").unwrap().iter().sum();
    assert_eq!(*cum.last().unwrap(), fails);
    let rewards: f64 = steps.column("reward").unwrap().iter().sum();
    let returns: f64 = episodes.column("return").unwrap().iter().sum();
    let last_end = *episodes.column("end_step").unwrap().last().unwrap() as usize;
    let finished: f64 = steps.column("reward").unwrap()[..last_end].iter().sum();
    assert!((finished - returns).abs() < 1e-9 && rewards.is_finite());
    let updates = Table::read(&run_a.join(UPDATES_CSV)).unwrap();
    assert_eq!(updates.rows.len(), 500);
    assert_eq!(updates.rows[0][0], 101.0);

    let summary = Summary::load(&run_a).unwrap();
    assert_eq!(summary.seed, 0);
    assert_eq!(summary.config_hash, tiny_cartpole().config_hash());
    let ckpts: Vec<_> = std::fs::read_dir(run_a.join(CHECKPOINT_DIR)).unwrap().collect();
    assert_eq!(ckpts.len(), 2);

    let again = cheq(&["train", "--config", cfg_path.to_str().unwrap()], Some(&a));
    assert_eq!(error_kind(&again), "run_exists");

    let other = cheq(&["train", "--config", cfg_path.to_str().unwrap(), "--seed", "1"], Some(&b));
    assert!(other.status.success());
    assert_ne!(
        std::fs::read(run_b.join(STEPS_CSV)).unwrap(),
        std::fs::read(b.join("tiny/seed-1").join(STEPS_CSV)).unwrap()
    );
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.clone(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn transfer_yields_one_row_per_checkpoint_and_track() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_racing();
    let run = cheq_harness::train_run(&cfg, &dir.path().join("run"), false).unwrap();
    let ckpt_root = run.run_dir.join(CHECKPOINT_DIR);
    let mut ckpts: Vec<String> = std::fs::read_dir(&ckpt_root)
        .unwrap()
        .map(|e| e.unwrap().path().to_str().unwrap().to_owned())
        .collect();
    ckpts.sort();
    assert_eq!(ckpts.len(), 10);
    let before = snapshot(&run.run_dir);

    let out_dir = dir.path().join("transfer");
    let mut args = vec!["transfer", "--episode-steps", "30", "--out", out_dir.to_str().unwrap(), "--checkpoints"];
    args.extend(ckpts.iter().map(String::as_str));
    let out = cheq(&args, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = Table::read(&out_dir.join(TRANSFER_CSV)).unwrap();
    assert_eq!(table.rows.len(), 100);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["rows"], 100);
    let returns = table.column("return").unwrap();
    let mean = returns.iter().sum::<f64>() / 100.0;
    assert!((summary["mean_return"].as_f64().unwrap() - mean).abs() < 1e-12);
    let success = table.column("success").unwrap().iter().sum::<f64>() / 100.0;
    assert_eq!(summary["success_rate"].as_f64().unwrap(), success);
    let prior = Table::read(&out_dir.join(PRIOR_CSV)).unwrap();
    assert_eq!(prior.rows.len(), 10);
    assert_eq!(summary["prior_success_rate"].as_f64().unwrap(), 1.0);

    let eval = cheq(&["eval", "--checkpoint", &ckpts[9], "--episodes", "2", "--track-seed", "1003"], None);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    assert_eq!(snapshot(&run.run_dir), before);
}

#[test]
fn gen_track_writes_loadable_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let out = cheq(&["gen-track", "--seed", "5", "--count", "3", "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success());
    for seed in 5..8 {
        let track = cheq_env::Track::load_json(&dir.path().join(format!("track-{seed}.json"))).unwrap();
        assert!(track.validate().is_valid(TrackGenParams::default().min_radius));
        assert_eq!(track.seed(), Some(seed));
    }
}

#[test]
fn show_profile_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = cheq(&["show-profile", "cartpole-ablation"], None);
    assert!(out.status.success());
    let path = dir.path().join("p.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let parsed = RunConfig::load(&path).unwrap();
    assert_eq!(parsed, RunConfig::profile("cartpole-ablation").unwrap());
}
