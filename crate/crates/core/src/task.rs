//! Environments paired with their control priors behind one interface.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use cheq_env::{CartPoleEnv, CartPoleParams, RacingConfig, RacingEnv, Track};

use crate::error::Result;
use crate::priors::{constant_force_prior, racing_prior, StanleyGains};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub failure: bool,
    pub truncated: bool,
}

impl TaskStep {
    pub fn episode_over(&self) -> bool {
        self.failure || self.truncated
    }
}

pub trait Task {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Per-component factors applied to observations at the network input.
    fn obs_scale(&self) -> Vec<f64>;
    fn reset(&mut self, rng: &mut ChaCha8Rng, mode: ResetMode) -> Vec<f64>;
    /// Prior action for the current state, in `[-1, 1]^d`.
    fn prior_action(&self) -> Vec<f64>;
    /// Steps with a policy-space action in `[-1, 1]^d`.
    fn step(&mut self, action: &[f64]) -> Result<TaskStep>;
    /// Curve radius ahead of the agent, where the notion exists.
    fn curve_radius(&self) -> Option<f64> {
        None
    }
    /// Planar position for trajectory logs.
    fn position(&self) -> Option<[f64; 2]> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct CartPoleTask {
    env: CartPoleEnv,
}

impl CartPoleTask {
    pub fn new(params: CartPoleParams) -> Self {
        Self {
            env: CartPoleEnv::new(params),
        }
    }

    pub fn env(&self) -> &CartPoleEnv {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut CartPoleEnv {
        &mut self.env
    }
}

impl Task for CartPoleTask {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn obs_scale(&self) -> Vec<f64> {
        vec![1.0; 4]
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng, _mode: ResetMode) -> Vec<f64> {
        self.env.reset(rng)
    }

    fn prior_action(&self) -> Vec<f64> {
        vec![constant_force_prior()]
    }

    fn step(&mut self, action: &[f64]) -> Result<TaskStep> {
        let t = self.env.step(action[0])?;
        Ok(TaskStep {
            obs: t.observation,
            reward: t.reward,
            failure: t.failure,
            truncated: t.truncated,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RacingTask {
    env: RacingEnv,
    gains: StanleyGains,
}

impl RacingTask {
    pub fn new(track: Track, config: RacingConfig, gains: StanleyGains) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            env: RacingEnv::new(track, config)?,
            gains,
        })
    }

    pub fn env(&self) -> &RacingEnv {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut RacingEnv {
        &mut self.env
    }

    pub fn gains(&self) -> &StanleyGains {
        &self.gains
    }
}

impl Task for RacingTask {
    fn obs_dim(&self) -> usize {
        self.env.config().observation_dim()
    }

    fn action_dim(&self) -> usize {
        3
    }

    fn obs_scale(&self) -> Vec<f64> {
        let n = self.env.config().sim.lookahead_points;
        let mut s = vec![0.1, 0.5, 1.0, 2.0];
        s.extend(std::iter::repeat_n(1.0 / 30.0, 2 * n));
        s
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng, mode: ResetMode) -> Vec<f64> {
        match mode {
            ResetMode::Train if self.env.config().sim.random_start => {
                let s = rng.random_range(0.0..self.env.track().length());
                self.env.reset_at(s)
            }
            _ => self.env.reset_at(self.env.config().sim.start_arclength),
        }
    }

    fn prior_action(&self) -> Vec<f64> {
        let out = racing_prior(
            self.env.state(),
            self.env.track(),
            self.env.curve_radius(),
            &self.gains,
            &self.env.config().vehicle,
        );
        out.normalized(self.env.config().vehicle.max_steer).to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<TaskStep> {
        let t = self.env.step(action)?;
        Ok(TaskStep {
            obs: t.observation,
            reward: t.reward,
            failure: t.failure,
            truncated: t.truncated,
        })
    }

    fn curve_radius(&self) -> Option<f64> {
        Some(self.env.curve_radius())
    }

    fn position(&self) -> Option<[f64; 2]> {
        Some(self.env.state().position())
    }
}
