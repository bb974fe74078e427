//! Fixed, stateless control priors: a biased constant-force cart-pole prior
//! and a Stanley + P-controller racing prior with a velocity gain schedule.

use serde::{Deserialize, Serialize};

use cheq_env::{RaceCarState, Track, VehicleParams};

use crate::error::{CoreError, Result};

/// Normalized cart-pole action of the prior: half the maximum force, pushing left.
pub const CARTPOLE_PRIOR_ACTION: f64 = -0.5;

/// The cart-pole prior as a normalized action in `[-1, 1]`. Multiply by `F_max` for newtons.
pub fn constant_force_prior() -> f64 {
    CARTPOLE_PRIOR_ACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StanleyGains {
    pub k_cross: f64,
    pub k_soft: f64,
    pub k_r: f64,
    pub v_max: f64,
    pub k_v_max: f64,
    pub k_v_min: f64,
    pub v_low: f64,
    pub v_high: f64,
}

impl Default for StanleyGains {
    fn default() -> Self {
        Self {
            k_cross: 0.5,
            k_soft: 1.0,
            k_r: 0.4,
            v_max: 8.0,
            k_v_max: 0.25,
            k_v_min: 0.05,
            v_low: 8.0,
            v_high: 28.0,
        }
    }
}

impl StanleyGains {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.k_cross,
            self.k_soft,
            self.k_r,
            self.v_max,
            self.k_v_max,
            self.k_v_min,
            self.v_low,
            self.v_high,
        ];
        if all.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(CoreError::InvalidConfig("controller gains must be positive".into()));
        }
        if self.k_v_max <= self.k_v_min || self.v_high <= self.v_low {
            return Err(CoreError::InvalidConfig(
                "gain schedule needs k_v_max > k_v_min and v_high > v_low".into(),
            ));
        }
        Ok(())
    }
}

/// `psi + k_cross * e / (v + k_soft)` without actuator limits.
pub fn stanley_law(heading_error: f64, crosstrack_error: f64, v: f64, gains: &StanleyGains) -> f64 {
    heading_error + gains.k_cross * crosstrack_error / (v.max(0.0) + gains.k_soft)
}

/// Stanley steering angle clamped to `[-max_steer, max_steer]`.
pub fn stanley_lateral(heading_error: f64, crosstrack_error: f64, v: f64, gains: &StanleyGains, max_steer: f64) -> f64 {
    stanley_law(heading_error, crosstrack_error, v, gains).clamp(-max_steer, max_steer)
}

/// `min(k_r * R, v_max)`
pub fn target_velocity(radius: f64, gains: &StanleyGains) -> f64 {
    (gains.k_r * radius).min(gains.v_max)
}

/// Linear from `k_v_max` at `v_low` to `k_v_min` at `v_high`, clipped outside.
pub fn gain_schedule(v: f64, gains: &StanleyGains) -> f64 {
    let t = ((v - gains.v_low) / (gains.v_high - gains.v_low)).clamp(0.0, 1.0);
    (1.0 - t) * gains.k_v_max + t * gains.k_v_min
}

/// Two mutually exclusive P controllers: `(throttle, brake)`.
pub fn longitudinal_control(v: f64, v_target: f64, k_v: f64) -> (f64, f64) {
    if v_target >= v {
        ((k_v * (v_target - v)).clamp(0.0, 1.0), 0.0)
    } else {
        (0.0, (k_v * (v - v_target)).clamp(0.0, 1.0))
    }
}

/// Heading error and crosstrack error of the front axle. Both follow the
/// steering sign convention: positive values call for a left turn.
pub fn tracking_errors(state: &RaceCarState, track: &Track, vehicle: &VehicleParams) -> (f64, f64) {
    let proj = track.project(state.front_axle(vehicle), Some((state.arclength, 30.0)));
    let heading_error = wrap_angle(proj.heading - state.yaw);
    (heading_error, -proj.lateral)
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + two_pi
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RacingPriorOutput {
    pub throttle: f64,
    pub brake: f64,
    /// Steering setpoint in radians.
    pub steer: f64,
    pub v_target: f64,
    pub radius: f64,
}

impl RacingPriorOutput {
    /// The prior action in the policy's `[-1, 1]^3` space.
    pub fn normalized(&self, max_steer: f64) -> [f64; 3] {
        [
            2.0 * self.throttle - 1.0,
            2.0 * self.brake - 1.0,
            (self.steer / max_steer).clamp(-1.0, 1.0),
        ]
    }
}

/// Path-following prior with curvature-adaptive target speed. `radius` is
/// the curve radius ahead of the vehicle.
pub fn racing_prior(
    state: &RaceCarState,
    track: &Track,
    radius: f64,
    gains: &StanleyGains,
    vehicle: &VehicleParams,
) -> RacingPriorOutput {
    let v = state.v_x.max(0.0);
    let v_target = target_velocity(radius, gains);
    let (throttle, brake) = longitudinal_control(v, v_target, gain_schedule(v, gains));
    let (heading_error, crosstrack) = tracking_errors(state, track, vehicle);
    RacingPriorOutput {
        throttle,
        brake,
        steer: stanley_lateral(heading_error, crosstrack, v, gains, vehicle.max_steer),
        v_target,
        radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        for a in [-10.0, -3.2, -1.0, 0.0, 2.0, 3.15, 7.0] {
            let w = wrap_angle(a);
            assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
            assert!(((a - w) / std::f64::consts::TAU).fract().abs() < 1e-12
                || (1.0 - ((a - w) / std::f64::consts::TAU).fract().abs()) < 1e-12);
        }
    }

    #[test]
    fn gains_validation() {
        assert!(StanleyGains::default().validate().is_ok());
        let bad = StanleyGains { k_v_min: 0.3, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
