//! Cart-pole balancing with a continuous horizontal force on the cart.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EnvError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub pole_half_length: f64,
    pub max_force: f64,
    pub dt: f64,
    pub angle_limit: f64,
    pub position_limit: f64,
    pub max_episode_steps: usize,
    /// Per-step penalty on |x| while upright.
    pub position_penalty: f64,
    /// Initial states are drawn uniformly from `[-init_range, init_range]^4`.
    pub init_range: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            max_force: 10.0,
            dt: 0.02,
            angle_limit: 0.21,
            position_limit: 2.4,
            max_episode_steps: 500,
            position_penalty: 0.05,
            init_range: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    /// Pole angle, zero upright.
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn mirrored(&self) -> Self {
        Self {
            x: -self.x,
            x_dot: -self.x_dot,
            theta: -self.theta,
            theta_dot: -self.theta_dot,
        }
    }

    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.x_dot.is_finite() && self.theta.is_finite() && self.theta_dot.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleStep {
    pub next_state: CartPoleState,
    pub reward: f64,
    /// Bound violation: the pole fell or the cart left the rail.
    pub failure: bool,
}

/// One semi-implicit Euler step of the standard cart-pole equations.
pub fn cartpole_step(state: &CartPoleState, force: f64, p: &CartPoleParams) -> Result<CartPoleStep> {
    if !state.is_finite() {
        return Err(EnvError::NonFinite("cart-pole state"));
    }
    if !force.is_finite() {
        return Err(EnvError::NonFinite("cart-pole force"));
    }
    if force.abs() > p.max_force {
        return Err(EnvError::ActionOutOfBounds {
            name: "force",
            value: force,
            lo: -p.max_force,
            hi: p.max_force,
        });
    }
    let total_mass = p.cart_mass + p.pole_mass;
    let pole_moment = p.pole_mass * p.pole_half_length;
    let (sin, cos) = state.theta.sin_cos();
    let temp = (force + pole_moment * state.theta_dot * state.theta_dot * sin) / total_mass;
    let theta_acc = (p.gravity * sin - cos * temp)
        / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
    let x_acc = temp - pole_moment * theta_acc * cos / total_mass;

    let x_dot = state.x_dot + p.dt * x_acc;
    let theta_dot = state.theta_dot + p.dt * theta_acc;
    let next = CartPoleState {
        x: state.x + p.dt * x_dot,
        x_dot,
        theta: state.theta + p.dt * theta_dot,
        theta_dot,
    };
    let failure = next.theta.abs() > p.angle_limit || next.x.abs() > p.position_limit;
    let reward = if failure {
        0.0
    } else {
        1.0 - p.position_penalty * next.x.abs()
    };
    Ok(CartPoleStep {
        next_state: next,
        reward,
        failure,
    })
}

/// Episodic wrapper with a step cap.
#[derive(Debug, Clone)]
pub struct CartPoleEnv {
    pub params: CartPoleParams,
    state: CartPoleState,
    steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleTransition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub failure: bool,
    /// Step cap reached without failure.
    pub truncated: bool,
}

impl CartPoleEnv {
    pub fn new(params: CartPoleParams) -> Self {
        Self {
            params,
            state: CartPoleState::default(),
            steps: 0,
        }
    }

    pub fn state(&self) -> &CartPoleState {
        &self.state
    }

    pub fn set_state(&mut self, state: CartPoleState) {
        self.state = state;
        self.steps = 0;
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let r = self.params.init_range;
        let mut draw = || if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        self.state = CartPoleState {
            x: draw(),
            x_dot: draw(),
            theta: draw(),
            theta_dot: draw(),
        };
        self.steps = 0;
        self.state.as_vec()
    }

    /// Steps with a normalized action in `[-1, 1]` scaled to the force limit.
    pub fn step(&mut self, action: f64) -> Result<CartPoleTransition> {
        if !(-1.0..=1.0).contains(&action) {
            return Err(EnvError::ActionOutOfBounds {
                name: "normalized force",
                value: action,
                lo: -1.0,
                hi: 1.0,
            });
        }
        let out = cartpole_step(&self.state, action * self.params.max_force, &self.params)?;
        self.state = out.next_state;
        self.steps += 1;
        Ok(CartPoleTransition {
            observation: self.state.as_vec(),
            reward: out.reward,
            failure: out.failure,
            truncated: !out.failure && self.steps >= self.params.max_episode_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_rest_is_fixed_point() {
        let p = CartPoleParams::default();
        let out = cartpole_step(&CartPoleState::default(), 0.0, &p).unwrap();
        assert_eq!(out.next_state, CartPoleState::default());
        assert_eq!(out.reward, 1.0);
        assert!(!out.failure);
    }

    #[test]
    fn leftward_force_moves_cart_left() {
        let p = CartPoleParams::default();
        let mut s = CartPoleState::default();
        let mut last_x = s.x;
        for _ in 0..10 {
            s = cartpole_step(&s, -5.0, &p).unwrap().next_state;
            assert!(s.x < last_x);
            last_x = s.x;
        }
    }

    #[test]
    fn failure_on_angle_and_position() {
        let p = CartPoleParams::default();
        let tilted = CartPoleState { theta: 0.2095, theta_dot: 1.0, ..Default::default() };
        let out = cartpole_step(&tilted, 0.0, &p).unwrap();
        assert!(out.failure);
        assert_eq!(out.reward, 0.0);
        let edge = CartPoleState { x: -2.399, x_dot: -1.0, ..Default::default() };
        assert!(cartpole_step(&edge, 0.0, &p).unwrap().failure);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = CartPoleParams::default();
        assert!(cartpole_step(&CartPoleState::default(), f64::NAN, &p).is_err());
        assert!(cartpole_step(&CartPoleState::default(), 11.0, &p).is_err());
        let bad = CartPoleState { x: f64::INFINITY, ..Default::default() };
        assert!(cartpole_step(&bad, 0.0, &p).is_err());
    }

    #[test]
    fn episode_cap_truncates() {
        let mut env = CartPoleEnv::new(CartPoleParams { max_episode_steps: 3, ..Default::default() });
        env.set_state(CartPoleState::default());
        assert!(!env.step(0.0).unwrap().truncated);
        assert!(!env.step(0.0).unwrap().truncated);
        let last = env.step(0.0).unwrap();
        assert!(last.truncated && !last.failure);
    }
}
