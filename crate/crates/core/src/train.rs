//! The hybrid interaction loop: act, mix with the prior, estimate uncertainty,
//! adapt the weight, store, and update with a configurable UTD ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, SacEnsembleAgent, UpdateStats};
use crate::error::{CoreError, Result};
use crate::hybrid::{ensemble_uncertainty, sample_bernoulli_masks, AdaptSignal, MixingKind, ReplayBuffer, Transition, WeightAdaptor};
use crate::task::{ResetMode, Task, TaskStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub total_steps: u64,
    /// One greedy evaluation episode after every this many training episodes.
    pub eval_every_episodes: u64,
    /// Greedy episodes run after training; their mean return is the final return.
    pub final_eval_episodes: usize,
    pub mixing: MixingKind,
    pub adaptor: WeightAdaptor,
    /// Draw the warm-up weight for uncertainty- and TD-driven adaptors.
    pub warmup_override: bool,
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            total_steps: 1_500_000,
            eval_every_episodes: 20,
            final_eval_episodes: 1,
            mixing: MixingKind::Regularized,
            adaptor: WeightAdaptor::default(),
            warmup_override: true,
            checkpoint_every: None,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.adaptor.validate()?;
        if self.total_steps == 0 || self.eval_every_episodes == 0 {
            return Err(CoreError::InvalidConfig(
                "total_steps and eval_every_episodes must be positive".into(),
            ));
        }
        if self.checkpoint_every == Some(0) {
            return Err(CoreError::InvalidConfig("checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

/// Independent random streams derived from one master seed. Stream `k` is
/// ChaCha8 keyed by the master seed with stream id `k` (counter-based
/// splitting), so streams never overlap and adding a purpose never shifts
/// the others.
#[derive(Debug, Clone)]
pub struct Streams {
    pub init: ChaCha8Rng,
    pub env: ChaCha8Rng,
    pub action: ChaCha8Rng,
    pub masks: ChaCha8Rng,
    pub update: ChaCha8Rng,
    pub eval: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Init = 1,
    Env = 2,
    Action = 3,
    Masks = 4,
    Update = 5,
    Eval = 6,
    Track = 7,
}

pub fn derive_stream(seed: u64, id: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

impl Streams {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            init: derive_stream(seed, StreamId::Init),
            env: derive_stream(seed, StreamId::Env),
            action: derive_stream(seed, StreamId::Action),
            masks: derive_stream(seed, StreamId::Masks),
            update: derive_stream(seed, StreamId::Update),
            eval: derive_stream(seed, StreamId::Eval),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lambda: f64,
    pub uncertainty: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub end_step: u64,
    pub ret: f64,
    pub failure: bool,
    pub cum_failures: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub step: u64,
    pub ret: f64,
    pub failure: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    pub step: u64,
    pub critic_loss_mean: f64,
    pub actor_obj: f64,
    pub alpha: f64,
}

/// Sink for the metric streams of one run.
pub trait Recorder {
    fn step(&mut self, _r: &StepRecord) -> Result<()> {
        Ok(())
    }
    fn episode(&mut self, _r: &EpisodeRecord) -> Result<()> {
        Ok(())
    }
    fn eval(&mut self, _r: &EvalRecord) -> Result<()> {
        Ok(())
    }
    fn update(&mut self, _r: &UpdateRecord) -> Result<()> {
        Ok(())
    }
    fn checkpoint(&mut self, _step: u64, _agent: &SacEnsembleAgent) -> Result<()> {
        Ok(())
    }
}

pub struct NullRecorder;

impl Recorder for NullRecorder {}

#[derive(Debug, Clone, Default)]
pub struct MemoryRecorder {
    pub steps: Vec<StepRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub evals: Vec<EvalRecord>,
    pub updates: Vec<UpdateRecord>,
    pub checkpoints: Vec<u64>,
}

impl Recorder for MemoryRecorder {
    fn step(&mut self, r: &StepRecord) -> Result<()> {
        self.steps.push(*r);
        Ok(())
    }
    fn episode(&mut self, r: &EpisodeRecord) -> Result<()> {
        self.episodes.push(*r);
        Ok(())
    }
    fn eval(&mut self, r: &EvalRecord) -> Result<()> {
        self.evals.push(*r);
        Ok(())
    }
    fn update(&mut self, r: &UpdateRecord) -> Result<()> {
        self.updates.push(*r);
        Ok(())
    }
    fn checkpoint(&mut self, step: u64, _agent: &SacEnsembleAgent) -> Result<()> {
        self.checkpoints.push(step);
        Ok(())
    }
}

/// Everything that happened in one interaction step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    pub obs: Vec<f64>,
    pub a_rl: Vec<f64>,
    pub a_prior: Vec<f64>,
    pub a_mix: Vec<f64>,
    pub lambda: f64,
    pub uncertainty: f64,
    pub td_error: f64,
    pub next_lambda: f64,
    pub result: TaskStep,
}

/// Per-step trace of a greedy episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    pub ret: f64,
    pub failure: bool,
    pub steps: u64,
    pub lambdas: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub radii: Vec<Option<f64>>,
    pub positions: Vec<Option<[f64; 2]>>,
    pub actions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub steps: u64,
    pub episodes: u64,
    pub cum_failures: u64,
    pub gradient_rounds: u64,
    pub actor_updates: u64,
    pub first_update_step: Option<u64>,
    pub final_return: f64,
    pub final_failures: u64,
}

/// Online ensemble disagreement at `(obs, action, lambda)`; zero for a single critic.
pub fn uncertainty_at(agent: &SacEnsembleAgent, obs: &[f64], lambda: f64, action: &[f64]) -> Result<f64> {
    if agent.config().ensemble_size < 2 {
        return Ok(0.0);
    }
    ensemble_uncertainty(&agent.q_values(obs, lambda, action)?)
}

/// `r + gamma (1 - done) mean_e Q_e(s', pi(s'), lambda) - mean_e Q_e(s, a, lambda)`
pub fn td_error(
    agent: &SacEnsembleAgent,
    obs: &[f64],
    action: &[f64],
    lambda: f64,
    step: &TaskStep,
) -> Result<f64> {
    let mean = |q: Vec<f64>| q.iter().sum::<f64>() / q.len() as f64;
    let q = mean(agent.q_values(obs, lambda, action)?);
    if step.failure {
        return Ok(step.reward - q);
    }
    let next_a = agent.greedy_action(&step.obs, lambda)?;
    let q_next = mean(agent.q_values(&step.obs, lambda, &next_a)?);
    Ok(step.reward + agent.config().gamma * q_next - q)
}

/// One greedy episode with the weight adapted as in training.
pub fn greedy_episode<T: Task + ?Sized>(
    task: &mut T,
    agent: &SacEnsembleAgent,
    settings: &TrainSettings,
    train_step: u64,
    rng: &mut ChaCha8Rng,
    mode: ResetMode,
) -> Result<EpisodeTrace> {
    let adaptor = &settings.adaptor;
    let mut obs = task.reset(rng, mode);
    let mut lambda = adaptor.initial(train_step);
    let mut trace = EpisodeTrace::default();
    loop {
        let a_rl = agent.greedy_action(&obs, lambda)?;
        let u = uncertainty_at(agent, &obs, lambda, &a_rl)?;
        let a_prior = task.prior_action();
        let a_mix = settings.mixing.apply(&a_prior, &a_rl, lambda)?;
        trace.lambdas.push(lambda);
        trace.uncertainties.push(u);
        trace.radii.push(task.curve_radius());
        trace.positions.push(task.position());
        let r = task.step(&a_mix)?;
        trace.actions.push(a_mix);
        let delta = if adaptor.needs_td_error() {
            td_error(agent, &obs, &a_rl, lambda, &r)?
        } else {
            0.0
        };
        trace.ret += r.reward;
        trace.steps += 1;
        lambda = adaptor.next(&AdaptSignal {
            step: train_step,
            uncertainty: u,
            td_error: delta,
        });
        if r.episode_over() {
            trace.failure = r.failure;
            return Ok(trace);
        }
        obs = r.obs;
    }
}

/// One episode of the prior acting alone.
pub fn prior_episode<T: Task + ?Sized>(task: &mut T, rng: &mut ChaCha8Rng, mode: ResetMode) -> Result<EpisodeTrace> {
    task.reset(rng, mode);
    let mut trace = EpisodeTrace::default();
    loop {
        let a = task.prior_action();
        trace.lambdas.push(0.0);
        trace.radii.push(task.curve_radius());
        trace.positions.push(task.position());
        let r = task.step(&a)?;
        trace.actions.push(a);
        trace.ret += r.reward;
        trace.steps += 1;
        if r.episode_over() {
            trace.failure = r.failure;
            return Ok(trace);
        }
    }
}

pub struct Trainer<T: Task> {
    task: T,
    eval_task: T,
    agent: SacEnsembleAgent,
    buffer: ReplayBuffer,
    settings: TrainSettings,
    streams: Streams,
    obs: Vec<f64>,
    lambda: f64,
    step: u64,
    episode: u64,
    episode_return: f64,
    cum_failures: u64,
    first_update_step: Option<u64>,
}

impl<T: Task> Trainer<T> {
    pub fn new(mut task: T, eval_task: T, agent_config: AgentConfig, settings: TrainSettings, seed: u64) -> Result<Self> {
        settings.validate()?;
        agent_config.validate()?;
        let mut streams = Streams::from_seed(seed);
        let agent = SacEnsembleAgent::new(
            agent_config.clone(),
            task.obs_dim(),
            task.action_dim(),
            task.obs_scale(),
            &mut streams.init,
        )?;
        let buffer = ReplayBuffer::new(
            agent_config.buffer_capacity.min(settings.total_steps.max(1) as usize).max(agent_config.batch_size),
            task.obs_dim(),
            task.action_dim(),
            agent_config.ensemble_size,
        )?;
        let obs = task.reset(&mut streams.env, ResetMode::Train);
        Ok(Self {
            lambda: settings.adaptor.initial(0),
            task,
            eval_task,
            agent,
            buffer,
            settings,
            streams,
            obs,
            step: 0,
            episode: 0,
            episode_return: 0.0,
            cum_failures: 0,
            first_update_step: None,
        })
    }

    pub fn agent(&self) -> &SacEnsembleAgent {
        &self.agent
    }

    pub fn agent_mut(&mut self) -> &mut SacEnsembleAgent {
        &mut self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn settings(&self) -> &TrainSettings {
        &self.settings
    }

    pub fn task(&self) -> &T {
        &self.task
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn episodes(&self) -> u64 {
        self.episode
    }

    pub fn cum_failures(&self) -> u64 {
        self.cum_failures
    }

    pub fn first_update_step(&self) -> Option<u64> {
        self.first_update_step
    }

    fn in_random_phase(&self) -> bool {
        self.step <= self.agent.config().learning_starts
    }

    /// One environment interaction: sample `a_RL`, mix with the prior, measure
    /// uncertainty, step, store, and choose the next weight. No gradient steps.
    pub fn interact(&mut self) -> Result<StepOutcome> {
        self.step += 1;
        let t = self.step;
        let lambda = self.lambda;
        let d = self.agent.action_dim();
        let a_rl = if self.in_random_phase() {
            (0..d).map(|_| self.streams.action.random_range(-1.0..=1.0)).collect()
        } else {
            self.agent.sample_action(&self.obs, lambda, &mut self.streams.action)?.sampled_action
        };
        let a_prior = self.task.prior_action();
        let a_mix = self.settings.mixing.apply(&a_prior, &a_rl, lambda)?;
        let u = uncertainty_at(&self.agent, &self.obs, lambda, &a_rl)?;
        if !u.is_finite() {
            return Err(CoreError::NonFinite { what: "uncertainty", step: t });
        }
        let result = self.task.step(&a_mix)?;
        let cfg = self.agent.config();
        let masks = sample_bernoulli_masks(cfg.ensemble_size, cfg.mask_rate, &mut self.streams.masks);
        let stored = if cfg.formulation.stores_mixed_action() { &a_mix } else { &a_rl };
        self.buffer.push(Transition {
            obs: self.obs.clone(),
            action: stored.clone(),
            lambda,
            reward: result.reward,
            next_obs: result.obs.clone(),
            done: result.failure,
            masks,
        })?;
        let td = if self.settings.adaptor.needs_td_error() {
            td_error(&self.agent, &self.obs, &a_rl, lambda, &result)?
        } else {
            0.0
        };
        let adaptive = matches!(self.settings.adaptor, WeightAdaptor::Cheq(_) | WeightAdaptor::Core { .. });
        let next_lambda = if self.settings.warmup_override && adaptive && t < cfg.lambda_warmup_steps {
            let [lo, hi] = cfg.warmup_lambda;
            if hi > lo {
                self.streams.action.random_range(lo..hi)
            } else {
                lo
            }
        } else {
            self.settings.adaptor.next(&AdaptSignal {
                step: t,
                uncertainty: u,
                td_error: td,
            })
        };
        Ok(StepOutcome {
            step: t,
            obs: std::mem::replace(&mut self.obs, result.obs.clone()),
            a_rl,
            a_prior,
            a_mix,
            lambda,
            uncertainty: u,
            td_error: td,
            next_lambda,
            result,
        })
    }

    /// Interaction, gradient updates, episode bookkeeping and evaluation for one step.
    pub fn train_step(&mut self, rec: &mut dyn Recorder) -> Result<StepOutcome> {
        let out = self.interact()?;
        let t = out.step;
        self.lambda = out.next_lambda;
        rec.step(&StepRecord {
            step: t,
            lambda: out.lambda,
            uncertainty: out.uncertainty,
            reward: out.result.reward,
        })?;
        self.episode_return += out.result.reward;

        if t > self.agent.config().learning_starts && self.buffer.len() >= self.agent.config().batch_size {
            self.first_update_step.get_or_insert(t);
            let UpdateStats {
                critic_loss_mean,
                actor_objective,
                alpha,
                ..
            } = self.agent.update(&self.buffer, &mut self.streams.update, t)?;
            rec.update(&UpdateRecord {
                step: t,
                critic_loss_mean,
                actor_obj: actor_objective,
                alpha,
            })?;
        }

        if out.result.episode_over() {
            self.episode += 1;
            if out.result.failure {
                self.cum_failures += 1;
            }
            rec.episode(&EpisodeRecord {
                episode: self.episode,
                end_step: t,
                ret: self.episode_return,
                failure: out.result.failure,
                cum_failures: self.cum_failures,
            })?;
            self.episode_return = 0.0;
            self.obs = self.task.reset(&mut self.streams.env, ResetMode::Train);
            self.lambda = self.settings.adaptor.initial(t);
            if self.episode % self.settings.eval_every_episodes == 0 {
                let trace = self.evaluate()?;
                rec.eval(&EvalRecord {
                    step: t,
                    ret: trace.ret,
                    failure: trace.failure,
                })?;
            }
        }
        if let Some(every) = self.settings.checkpoint_every {
            if t % every == 0 {
                rec.checkpoint(t, &self.agent)?;
            }
        }
        Ok(out)
    }

    /// Greedy episode on the evaluation copy of the task.
    pub fn evaluate(&mut self) -> Result<EpisodeTrace> {
        greedy_episode(
            &mut self.eval_task,
            &self.agent,
            &self.settings,
            self.step,
            &mut self.streams.eval,
            ResetMode::Eval,
        )
    }

    pub fn run(&mut self, rec: &mut dyn Recorder) -> Result<TrainOutcome> {
        while self.step < self.settings.total_steps {
            self.train_step(rec)?;
        }
        if self.settings.checkpoint_every.is_none_or(|every| self.step % every != 0) {
            rec.checkpoint(self.step, &self.agent)?;
        }
        let mut total = 0.0;
        let mut failures = 0;
        let n = self.settings.final_eval_episodes.max(1);
        for _ in 0..n {
            let trace = self.evaluate()?;
            total += trace.ret;
            failures += u64::from(trace.failure);
        }
        Ok(TrainOutcome {
            steps: self.step,
            episodes: self.episode,
            cum_failures: self.cum_failures,
            gradient_rounds: self.agent.gradient_rounds(),
            actor_updates: self.agent.actor_updates(),
            first_update_step: self.first_update_step,
            final_return: total / n as f64,
            final_failures: failures,
        })
    }
}
