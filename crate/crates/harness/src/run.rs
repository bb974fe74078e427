//! Single runs: training with full logging, and greedy evaluation of saved checkpoints.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;

use cheq_core::checkpoint::{load_bundle, Manifest, MANIFEST_FILE};
use cheq_core::train::{derive_stream, EpisodeTrace, StreamId, Streams};
use cheq_core::{greedy_episode, ResetMode, SacEnsembleAgent, Task, TaskStep, TrainOutcome, TrainSettings, Trainer};

use crate::config::{AnyTask, EnvSpec, RunConfig, TrackSpec};
use crate::error::{HarnessError, Result};
use crate::logs::{CsvRecorder, Summary, CHECKPOINT_DIR, CONFIG_JSON, SUMMARY_JSON};

impl Task for AnyTask {
    fn obs_dim(&self) -> usize {
        match self {
            Self::CartPole(t) => t.obs_dim(),
            Self::Racing(t) => t.obs_dim(),
        }
    }

    fn action_dim(&self) -> usize {
        match self {
            Self::CartPole(t) => t.action_dim(),
            Self::Racing(t) => t.action_dim(),
        }
    }

    fn obs_scale(&self) -> Vec<f64> {
        match self {
            Self::CartPole(t) => t.obs_scale(),
            Self::Racing(t) => t.obs_scale(),
        }
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng, mode: ResetMode) -> Vec<f64> {
        match self {
            Self::CartPole(t) => t.reset(rng, mode),
            Self::Racing(t) => t.reset(rng, mode),
        }
    }

    fn prior_action(&self) -> Vec<f64> {
        match self {
            Self::CartPole(t) => t.prior_action(),
            Self::Racing(t) => t.prior_action(),
        }
    }

    fn step(&mut self, action: &[f64]) -> cheq_core::Result<TaskStep> {
        match self {
            Self::CartPole(t) => t.step(action),
            Self::Racing(t) => t.step(action),
        }
    }

    fn curve_radius(&self) -> Option<f64> {
        match self {
            Self::CartPole(t) => t.curve_radius(),
            Self::Racing(t) => t.curve_radius(),
        }
    }

    fn position(&self) -> Option<[f64; 2]> {
        match self {
            Self::CartPole(t) => t.position(),
            Self::Racing(t) => t.position(),
        }
    }
}

/// Every random stream of a run, derived from one master seed by ChaCha8
/// stream splitting: stream `k` is keyed by the seed with stream id `k`.
#[derive(Debug, Clone)]
pub struct SeedHierarchy {
    pub seed: u64,
    pub streams: Streams,
    pub track: ChaCha8Rng,
}

pub fn seed_everything(seed: u64) -> SeedHierarchy {
    SeedHierarchy {
        seed,
        streams: Streams::from_seed(seed),
        track: derive_stream(seed, StreamId::Track),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_dir: PathBuf,
    pub summary: Summary,
    pub outcome: TrainOutcome,
}

/// Trains one configuration into `run_dir`. A directory with a summary is
/// a finished run and is only replaced when `overwrite` is set; partial runs
/// are restarted from scratch.
pub fn train_run(cfg: &RunConfig, run_dir: &Path, overwrite: bool) -> Result<RunOutput> {
    cfg.validate()?;
    if run_dir.join(SUMMARY_JSON).exists() {
        if !overwrite {
            return Err(HarnessError::RunExists(run_dir.to_path_buf()));
        }
        std::fs::remove_file(run_dir.join(SUMMARY_JSON))?;
    }
    let ckpt = run_dir.join(CHECKPOINT_DIR);
    if ckpt.exists() {
        std::fs::remove_dir_all(&ckpt)?;
    }
    std::fs::create_dir_all(run_dir)?;
    std::fs::write(run_dir.join(CONFIG_JSON), cfg.to_json())?;

    let hash = cfg.config_hash();
    let (agent_cfg, settings) = cfg.assemble()?;
    let meta = serde_json::json!({
        "config_hash": hash,
        "seed": cfg.seed,
        "config": cfg,
    });
    let mut rec = CsvRecorder::create(run_dir, settings.adaptor.clone(), settings.mixing, meta)?;
    let task = cfg.env.build(&cfg.gains)?;
    let mut trainer = Trainer::new(task.clone(), task, agent_cfg, settings, cfg.seed)?;
    let outcome = trainer.run(&mut rec)?;
    rec.finish()?;

    let summary = Summary {
        config_hash: hash,
        seed: cfg.seed,
        final_return: outcome.final_return,
        cum_failures: outcome.cum_failures,
        success_rate: Some(1.0 - outcome.final_failures as f64 / cfg.final_eval_episodes as f64),
        label: cfg.label.clone(),
        steps: outcome.steps,
        episodes: outcome.episodes,
        gradient_rounds: outcome.gradient_rounds,
    };
    std::fs::write(run_dir.join(SUMMARY_JSON), serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutput {
        run_dir: run_dir.to_path_buf(),
        summary,
        outcome,
    })
}

/// An agent restored from a checkpoint together with the run that produced it.
pub struct LoadedCheckpoint {
    pub agent: SacEnsembleAgent,
    pub manifest: Manifest,
    pub config: RunConfig,
}

impl LoadedCheckpoint {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(HarnessError::MissingCheckpoint(dir.to_path_buf()));
        }
        let (agent, manifest) = load_bundle(dir)?;
        let config: RunConfig = serde_json::from_value(manifest.run["config"].clone()).map_err(|e| {
            HarnessError::Artifact {
                path: dir.join(MANIFEST_FILE),
                reason: format!("run config missing or invalid: {e}"),
            }
        })?;
        Ok(Self { agent, manifest, config })
    }

    /// Loop settings that reproduce the weight adaption of the training run.
    pub fn settings(&self) -> TrainSettings {
        TrainSettings {
            adaptor: self.manifest.adaptor.clone(),
            mixing: self.manifest.mixing,
            ..TrainSettings::default()
        }
    }

    /// The training task, optionally on another track.
    pub fn task(&self, track: Option<TrackSpec>, max_episode_steps: Option<usize>) -> Result<AnyTask> {
        let env = match (&self.config.env, track) {
            (EnvSpec::Racing { config, .. }, Some(track)) => EnvSpec::Racing {
                config: config.clone(),
                track,
            },
            (EnvSpec::CartPole { .. }, Some(_)) => {
                return Err(HarnessError::InvalidConfig("track override needs a racing checkpoint".into()))
            }
            (env, None) => env.clone(),
        };
        let env = match (env, max_episode_steps) {
            (EnvSpec::Racing { mut config, track }, Some(n)) => {
                config.sim.max_episode_steps = n;
                EnvSpec::Racing { config, track }
            }
            (EnvSpec::CartPole { mut params }, Some(n)) => {
                params.max_episode_steps = n;
                EnvSpec::CartPole { params }
            }
            (env, None) => env,
        };
        env.build(&self.config.gains)
    }

    /// Greedy episodes with the weight adapted as in training. Nothing is written.
    pub fn evaluate(&self, task: &mut AnyTask, episodes: usize, seed: u64) -> Result<Vec<EpisodeTrace>> {
        let settings = self.settings();
        let mut rng = derive_stream(seed, StreamId::Eval);
        (0..episodes)
            .map(|_| Ok(greedy_episode(task, &self.agent, &settings, self.manifest.step, &mut rng, ResetMode::Eval)?))
            .collect()
    }
}
