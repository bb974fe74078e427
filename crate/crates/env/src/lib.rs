//! Environments for hybrid-control experiments: a continuous cart-pole and a
//! single-track race car on procedurally generated closed tracks.

pub mod cartpole;
pub mod error;
pub mod racing;
pub mod tire;
pub mod track;
pub mod vehicle;

pub use cartpole::{cartpole_step, CartPoleEnv, CartPoleParams, CartPoleState, CartPoleStep, CartPoleTransition};
pub use error::{EnvError, Result};
pub use racing::{RacingConfig, RacingEnv, RacingTransition, SimParams};
pub use tire::{tire_forces, TireParams};
pub use track::{circumradius, generate_track, Point, Projection, Track, TrackFile, TrackGenParams, ValidationReport};
pub use vehicle::{
    curve_radius_ahead, observe, racing_reward, racing_step, RaceCarState, RacingAction, RacingStep, VehicleParams,
};
