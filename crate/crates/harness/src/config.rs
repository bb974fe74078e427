//! Run configuration: one JSON document with a schema version, resolved into
//! the agent, loop settings and task of a single training run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cheq_core::{AgentConfig, CartPoleTask, MixingKind, QReduction, RacingTask, StanleyGains, TrainSettings, Variant};
use cheq_env::{generate_track, CartPoleParams, RacingConfig, Track, TrackGenParams};

use crate::error::{read_file, HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the output root of every run.
pub const OUT_DIR_ENV: &str = "CHEQ_OUT_DIR";

pub const PROFILES: [&str; 3] = ["cartpole-ablation", "racing-small", "paper"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrackSpec {
    Generated {
        seed: u64,
        #[serde(default)]
        params: TrackGenParams,
    },
    File {
        path: PathBuf,
    },
}

impl TrackSpec {
    pub fn load(&self) -> Result<Track> {
        let track = match self {
            Self::Generated { seed, params } => generate_track(*seed, params)?,
            Self::File { path } => Track::load_json(path)?,
        };
        let report = track.validate();
        if !report.is_valid(0.0) {
            return Err(HarnessError::InvalidConfig(format!("track fails validation: {report:?}")));
        }
        Ok(track)
    }
}

impl Default for TrackSpec {
    fn default() -> Self {
        Self::Generated {
            seed: 0,
            params: TrackGenParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    CartPole {
        #[serde(default)]
        params: CartPoleParams,
    },
    Racing {
        #[serde(default)]
        config: RacingConfig,
        #[serde(default)]
        track: TrackSpec,
    },
}

/// A task instance built from an [`EnvSpec`].
#[derive(Debug, Clone)]
pub enum AnyTask {
    CartPole(CartPoleTask),
    Racing(RacingTask),
}

impl EnvSpec {
    pub fn build(&self, gains: &StanleyGains) -> Result<AnyTask> {
        Ok(match self {
            Self::CartPole { params } => AnyTask::CartPole(CartPoleTask::new(params.clone())),
            Self::Racing { config, track } => {
                AnyTask::Racing(RacingTask::new(track.load()?, config.clone(), gains.clone())?)
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::CartPole { params } => {
                let positive = [params.cart_mass, params.pole_mass, params.pole_half_length, params.max_force, params.dt];
                if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || params.max_episode_steps == 0 {
                    return Err(HarnessError::InvalidConfig("cart-pole parameters must be positive".into()));
                }
                Ok(())
            }
            Self::Racing { config, track } => {
                config.validate()?;
                track.load().map(|_| ())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Directory name of the run below the output root.
    pub label: String,
    pub env: EnvSpec,
    pub variant: Variant,
    pub agent: AgentConfig,
    pub gains: StanleyGains,
    pub mixing: MixingKind,
    pub total_steps: u64,
    pub seed: u64,
    pub eval_every_episodes: u64,
    pub final_eval_episodes: usize,
    pub warmup_override: bool,
    pub checkpoint_every: Option<u64>,
    /// Output root; `CHEQ_OUT_DIR` takes precedence.
    pub out_root: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let settings = TrainSettings::default();
        Self {
            schema_version: SCHEMA_VERSION,
            label: "cheq".into(),
            env: EnvSpec::Racing {
                config: RacingConfig::default(),
                track: TrackSpec::default(),
            },
            variant: Variant::default(),
            agent: AgentConfig::default(),
            gains: StanleyGains::default(),
            mixing: settings.mixing,
            total_steps: settings.total_steps,
            seed: 0,
            eval_every_episodes: settings.eval_every_episodes,
            final_eval_episodes: settings.final_eval_episodes,
            warmup_override: settings.warmup_override,
            checkpoint_every: None,
            out_root: None,
        }
    }
}

impl RunConfig {
    /// Bundled profiles. `paper` is the full-scale racing setup; the other
    /// two are the desk-scale experiments.
    pub fn profile(name: &str) -> Result<Self> {
        let base = Self::default();
        Ok(match name {
            "paper" => Self {
                checkpoint_every: Some(150_000),
                ..base
            },
            "racing-small" => Self {
                agent: AgentConfig {
                    hidden: vec![64, 64],
                    ..base.agent.clone()
                },
                total_steps: 200_000,
                checkpoint_every: Some(20_000),
                ..base
            },
            "cartpole-ablation" => Self {
                label: "fixed-0.5".into(),
                env: EnvSpec::CartPole {
                    params: CartPoleParams::default(),
                },
                variant: Variant::FixedHybrid { lambda: 0.5 },
                agent: AgentConfig {
                    hidden: vec![64, 64],
                    ensemble_size: 2,
                    subset_size: 2,
                    actor_q: QReduction::Min,
                    ..base.agent.clone()
                },
                total_steps: 100_000,
                final_eval_episodes: 5,
                ..base
            },
            other => return Err(HarnessError::UnknownProfile(other.into())),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&read_file(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Agent and loop settings after the variant has been applied.
    pub fn assemble(&self) -> Result<(AgentConfig, TrainSettings)> {
        let settings = TrainSettings {
            total_steps: self.total_steps,
            eval_every_episodes: self.eval_every_episodes,
            final_eval_episodes: self.final_eval_episodes,
            mixing: self.mixing,
            warmup_override: self.warmup_override,
            checkpoint_every: self.checkpoint_every,
            ..TrainSettings::default()
        };
        Ok(self.variant.assemble(self.agent.clone(), settings)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.label.is_empty() || self.label.contains(['/', '\\']) || self.label.starts_with('.') {
            return Err(HarnessError::InvalidConfig(format!("label {:?} is not a plain directory name", self.label)));
        }
        if self.final_eval_episodes == 0 {
            return Err(HarnessError::InvalidConfig("final_eval_episodes must be positive".into()));
        }
        self.gains.validate()?;
        self.assemble()?;
        self.env.validate()
    }

    /// SHA-256 over the canonical JSON of everything that influences the
    /// run; the output location is excluded.
    pub fn config_hash(&self) -> String {
        let canonical = Self {
            out_root: None,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// `CHEQ_OUT_DIR`, then the configured root, then `runs`.
    pub fn resolved_root(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.out_root.clone().unwrap_or_else(|| PathBuf::from("runs")),
        }
    }

    pub fn run_dir(&self, root: &Path) -> PathBuf {
        root.join(&self.label).join(format!("seed-{}", self.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        for name in PROFILES {
            RunConfig::profile(name).unwrap().validate().unwrap();
        }
        assert!(matches!(RunConfig::profile("nope"), Err(HarnessError::UnknownProfile(_))));
    }

    #[test]
    fn hash_ignores_output_root() {
        let a = RunConfig::default();
        let b = RunConfig {
            out_root: Some("/elsewhere".into()),
            ..a.clone()
        };
        assert_eq!(a.config_hash(), b.config_hash());
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let cfg = RunConfig {
            schema_version: 7,
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(HarnessError::SchemaVersion { found: 7, .. })));
    }
}
