//! Racing environment: vehicle, track and episode bookkeeping behind a
//! normalized `[-1, 1]^3` action interface.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EnvError, Result};
use crate::track::Track;
use crate::vehicle::{curve_radius_ahead, observe, racing_step, RaceCarState, RacingAction, RacingStep, VehicleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Control interval (s).
    pub dt: f64,
    pub substeps: usize,
    pub lookahead_points: usize,
    /// Distance (m) covered by the lookahead points.
    pub lookahead_distance: f64,
    /// Distances ahead of the projection used by the prior's curve radius.
    pub radius_preview: [f64; 3],
    pub radius_cap: f64,
    pub max_episode_steps: usize,
    pub start_speed: f64,
    /// Draw the start arclength uniformly at reset; otherwise start at `start_arclength`.
    pub random_start: bool,
    pub start_arclength: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.05,
            substeps: 5,
            lookahead_points: 20,
            lookahead_distance: 60.0,
            radius_preview: [6.0, 14.0, 22.0],
            radius_cap: 1000.0,
            max_episode_steps: 500,
            start_speed: 5.0,
            random_start: true,
            start_arclength: 0.0,
        }
    }
}

/// Single structured configuration for the racing simulator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RacingConfig {
    pub vehicle: VehicleParams,
    pub sim: SimParams,
}

impl RacingConfig {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        let s = &self.sim;
        if !(s.dt > 0.0) || s.substeps == 0 || s.lookahead_points == 0 || s.max_episode_steps == 0 {
            return Err(EnvError::InvalidConfig(
                "dt, substeps, lookahead_points and max_episode_steps must be positive".into(),
            ));
        }
        if !(s.lookahead_distance > 0.0 && s.radius_cap > 0.0 && s.start_speed >= 0.0) {
            return Err(EnvError::InvalidConfig("invalid lookahead, radius cap or start speed".into()));
        }
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        4 + 2 * self.sim.lookahead_points
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RacingTransition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub failure: bool,
    pub collision: bool,
    /// Step cap reached without failure.
    pub truncated: bool,
    pub step: RacingStep,
}

#[derive(Debug, Clone)]
pub struct RacingEnv {
    track: Track,
    config: RacingConfig,
    state: RaceCarState,
    steps: usize,
    distance: f64,
}

impl RacingEnv {
    pub fn new(track: Track, config: RacingConfig) -> Result<Self> {
        config.validate()?;
        let state = RaceCarState::on_centerline(&track, config.sim.start_arclength, config.sim.start_speed);
        Ok(Self {
            track,
            config,
            state,
            steps: 0,
            distance: 0.0,
        })
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn config(&self) -> &RacingConfig {
        &self.config
    }

    pub fn state(&self) -> &RaceCarState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Net centerline distance covered in the current episode.
    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn laps(&self) -> f64 {
        self.distance / self.track.length()
    }

    pub fn set_random_start(&mut self, random: bool) {
        self.config.sim.random_start = random;
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let s = if self.config.sim.random_start {
            rng.random_range(0.0..self.track.length())
        } else {
            self.config.sim.start_arclength
        };
        self.reset_at(s)
    }

    pub fn reset_at(&mut self, arclength: f64) -> Vec<f64> {
        self.state = RaceCarState::on_centerline(&self.track, arclength, self.config.sim.start_speed);
        self.steps = 0;
        self.distance = 0.0;
        self.observation()
    }

    pub fn set_state(&mut self, state: RaceCarState) {
        self.state = state;
    }

    pub fn observation(&self) -> Vec<f64> {
        observe(
            &self.state,
            &self.track,
            self.config.sim.lookahead_points,
            self.config.sim.lookahead_distance,
        )
    }

    pub fn curve_radius(&self) -> f64 {
        curve_radius_ahead(
            &self.state,
            &self.track,
            self.config.sim.radius_preview,
            self.config.sim.radius_cap,
        )
    }

    /// Steps with a policy action in `[-1, 1]^3`.
    pub fn step(&mut self, action: &[f64]) -> Result<RacingTransition> {
        let action = RacingAction::from_normalized(action)?;
        let out = racing_step(
            &self.state,
            &action,
            &self.track,
            &self.config.vehicle,
            self.config.sim.dt,
            self.config.sim.substeps,
        )?;
        self.state = out.next_state;
        self.steps += 1;
        self.distance += out.progress;
        Ok(RacingTransition {
            observation: self.observation(),
            reward: out.reward,
            failure: out.failure,
            collision: out.collision,
            truncated: !out.failure && self.steps >= self.config.sim.max_episode_steps,
            step: out,
        })
    }
}
