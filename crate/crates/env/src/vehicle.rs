//! Dynamic single-track (bicycle) vehicle with per-axle Dugoff tires and
//! front-wheel drive.

use serde::{Deserialize, Serialize};

use crate::error::{EnvError, Result};
use crate::tire::{tire_forces, TireParams};
use crate::track::{circumradius, Point, Track};

/// Compact-car parameter set. Axle quantities are per axle (both wheels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    pub cg_to_front: f64,
    pub cg_to_rear: f64,
    pub cg_height: f64,
    pub front_tire: TireParams,
    pub rear_tire: TireParams,
    pub max_drive_force: f64,
    pub max_power: f64,
    pub max_brake_force: f64,
    pub brake_front_share: f64,
    /// `0.5 * rho * c_d * A` (kg/m).
    pub drag_coefficient: f64,
    pub rolling_resistance: f64,
    pub max_steer: f64,
    pub max_steer_rate: f64,
    pub front_overhang: f64,
    pub rear_overhang: f64,
    pub body_half_width: f64,
    /// Lower bound on speeds used in slip denominators.
    pub velocity_floor: f64,
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1300.0,
            yaw_inertia: 1950.0,
            cg_to_front: 1.1,
            cg_to_rear: 1.5,
            cg_height: 0.5,
            front_tire: TireParams {
                longitudinal_stiffness: 120_000.0,
                cornering_stiffness: 80_000.0,
                friction: 1.0,
            },
            rear_tire: TireParams {
                longitudinal_stiffness: 120_000.0,
                cornering_stiffness: 90_000.0,
                friction: 1.0,
            },
            max_drive_force: 5_000.0,
            max_power: 90_000.0,
            max_brake_force: 12_000.0,
            brake_front_share: 0.6,
            drag_coefficient: 0.4,
            rolling_resistance: 0.015,
            max_steer: 0.5,
            max_steer_rate: 2.0,
            front_overhang: 0.8,
            rear_overhang: 1.0,
            body_half_width: 0.9,
            velocity_floor: 0.5,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.cg_to_front + self.cg_to_rear
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("cg_to_front", self.cg_to_front),
            ("cg_to_rear", self.cg_to_rear),
            ("max_steer", self.max_steer),
            ("max_steer_rate", self.max_steer_rate),
            ("velocity_floor", self.velocity_floor),
            ("gravity", self.gravity),
            ("front friction", self.front_tire.friction),
            ("rear friction", self.rear_tire.friction),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EnvError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.brake_front_share) {
            return Err(EnvError::InvalidConfig("brake_front_share outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RaceCarState {
    pub x: f64,
    pub y: f64,
    /// Heading (rad, counterclockwise from +x).
    pub yaw: f64,
    /// Body-frame longitudinal velocity.
    pub v_x: f64,
    /// Body-frame lateral velocity, positive to the left.
    pub v_y: f64,
    pub yaw_rate: f64,
    /// Front wheel steering angle, positive to the left.
    pub steer: f64,
    /// Arclength of the closest centerline point.
    pub arclength: f64,
    /// Longitudinal acceleration of the last substep, used for load transfer.
    pub long_accel: f64,
}

impl RaceCarState {
    pub fn position(&self) -> Point {
        [self.x, self.y]
    }

    /// World-frame velocity.
    pub fn velocity(&self) -> Point {
        let (s, c) = self.yaw.sin_cos();
        [self.v_x * c - self.v_y * s, self.v_x * s + self.v_y * c]
    }

    pub fn speed(&self) -> f64 {
        self.v_x.hypot(self.v_y)
    }

    fn is_finite(&self) -> bool {
        [
            self.x,
            self.y,
            self.yaw,
            self.v_x,
            self.v_y,
            self.yaw_rate,
            self.steer,
            self.arclength,
            self.long_accel,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Car at rest-free start on the centerline at arclength `s`, aligned with the track.
    pub fn on_centerline(track: &Track, s: f64, speed: f64) -> Self {
        let s = track.wrap(s);
        let p = track.point_at(s);
        Self {
            x: p[0],
            y: p[1],
            yaw: track.heading_at(s),
            v_x: speed,
            arclength: s,
            ..Default::default()
        }
    }

    /// Body corners in world coordinates.
    pub fn corners(&self, p: &VehicleParams) -> [Point; 4] {
        let front = p.cg_to_front + p.front_overhang;
        let rear = -(p.cg_to_rear + p.rear_overhang);
        let w = p.body_half_width;
        let (s, c) = self.yaw.sin_cos();
        [(front, w), (front, -w), (rear, w), (rear, -w)].map(|(lx, ly)| {
            [self.x + lx * c - ly * s, self.y + lx * s + ly * c]
        })
    }

    /// Front axle position in world coordinates.
    pub fn front_axle(&self, p: &VehicleParams) -> Point {
        let (s, c) = self.yaw.sin_cos();
        [self.x + p.cg_to_front * c, self.y + p.cg_to_front * s]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RacingAction {
    /// `[0, 1]`
    pub throttle: f64,
    /// `[0, 1]`
    pub brake: f64,
    /// Steering setpoint as a fraction of `max_steer`, `[-1, 1]`, positive left.
    pub steer: f64,
}

impl RacingAction {
    pub const DIM: usize = 3;

    /// Maps a policy action in `[-1, 1]^3` onto the actuator ranges.
    pub fn from_normalized(a: &[f64]) -> Result<Self> {
        if a.len() != Self::DIM {
            return Err(EnvError::InvalidConfig(format!(
                "racing action needs {} components, got {}",
                Self::DIM,
                a.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::NonFinite("racing action"));
        }
        Ok(Self {
            throttle: (a[0] + 1.0) / 2.0,
            brake: (a[1] + 1.0) / 2.0,
            steer: a[2],
        })
    }

    pub fn to_normalized(&self) -> [f64; 3] {
        [2.0 * self.throttle - 1.0, 2.0 * self.brake - 1.0, self.steer]
    }

    fn check(&self) -> Result<()> {
        let checks = [
            ("throttle", self.throttle, 0.0, 1.0),
            ("brake", self.brake, 0.0, 1.0),
            ("steer", self.steer, -1.0, 1.0),
        ];
        for (name, value, lo, hi) in checks {
            if !value.is_finite() {
                return Err(EnvError::NonFinite("racing action"));
            }
            // tolerate rounding from the affine action map
            if value < lo - 1e-12 || value > hi + 1e-12 {
                return Err(EnvError::ActionOutOfBounds { name, value, lo, hi });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxleForces {
    pub front: (f64, f64),
    pub rear: (f64, f64),
    pub front_load: f64,
    pub rear_load: f64,
}

impl AxleForces {
    /// Largest `|F| / (mu * F_z)` over both axles.
    pub fn friction_usage(&self, p: &VehicleParams) -> f64 {
        let usage = |f: (f64, f64), load: f64, mu: f64| {
            if load <= 0.0 {
                0.0
            } else {
                f.0.hypot(f.1) / (mu * load)
            }
        };
        usage(self.front, self.front_load, p.front_tire.friction)
            .max(usage(self.rear, self.rear_load, p.rear_tire.friction))
    }
}

#[derive(Debug, Clone, Copy)]
struct Inputs {
    steer: f64,
    front_cmd: f64,
    rear_cmd: f64,
    front_load: f64,
    rear_load: f64,
}

fn axle_forces(p: &VehicleParams, v_x: f64, v_y: f64, r: f64, u: &Inputs) -> AxleForces {
    let vxd = v_x.abs().max(p.velocity_floor);
    // fade slip angles out below the velocity floor so a parked car stays parked
    let fade = (v_x.hypot(v_y) / p.velocity_floor).min(1.0);
    let alpha_f = ((v_y + p.cg_to_front * r).atan2(vxd) - u.steer) * fade;
    let alpha_r = (v_y - p.cg_to_rear * r).atan2(vxd) * fade;
    let kappa_f = (u.front_cmd / p.front_tire.longitudinal_stiffness).clamp(-1.0, 1.0);
    let kappa_r = (u.rear_cmd / p.rear_tire.longitudinal_stiffness).clamp(-1.0, 1.0);
    AxleForces {
        front: tire_forces(kappa_f, alpha_f, u.front_load, &p.front_tire),
        rear: tire_forces(kappa_r, alpha_r, u.rear_load, &p.rear_tire),
        front_load: u.front_load,
        rear_load: u.rear_load,
    }
}

/// Body-frame accelerations `(dv_x, dv_y, dr)` and the longitudinal force per unit mass.
fn accelerations(p: &VehicleParams, v_x: f64, v_y: f64, r: f64, u: &Inputs) -> ([f64; 3], f64, AxleForces) {
    let f = axle_forces(p, v_x, v_y, r, u);
    let (sin, cos) = u.steer.sin_cos();
    let (fxf, fyf) = f.front;
    let (fxr, fyr) = f.rear;
    let drag = p.drag_coefficient * v_x * v_x.abs();
    let roll = p.rolling_resistance
        * p.mass
        * p.gravity
        * (v_x / p.velocity_floor).clamp(-1.0, 1.0);
    let fx = fxf * cos - fyf * sin + fxr - drag - roll;
    let fy = fxf * sin + fyf * cos + fyr;
    let mz = p.cg_to_front * (fxf * sin + fyf * cos) - p.cg_to_rear * fyr;
    let ax = fx / p.mass;
    (
        [ax + v_y * r, fy / p.mass - v_x * r, mz / p.yaw_inertia],
        ax,
        f,
    )
}

/// One physics substep. Longitudinal velocity is explicit; the stiff lateral
/// and yaw velocities use a linearly implicit update with a finite-difference
/// Jacobian; positions then use the updated velocities.
fn substep(p: &VehicleParams, s: &mut RaceCarState, a: &RacingAction, h: f64) -> AxleForces {
    let target = a.steer * p.max_steer;
    let max_delta = p.max_steer_rate * h;
    s.steer = (s.steer + (target - s.steer).clamp(-max_delta, max_delta)).clamp(-p.max_steer, p.max_steer);

    let drive = a.throttle * p.max_drive_force.min(p.max_power / s.v_x.max(1.0));
    let brake = a.brake * p.max_brake_force * (s.v_x / p.velocity_floor).clamp(-1.0, 1.0);
    let l = p.wheelbase();
    let transfer = p.mass * s.long_accel * p.cg_height;
    let u = Inputs {
        steer: s.steer,
        front_cmd: drive - p.brake_front_share * brake,
        rear_cmd: -(1.0 - p.brake_front_share) * brake,
        front_load: ((p.mass * p.gravity * p.cg_to_rear - transfer) / l).max(0.0),
        rear_load: ((p.mass * p.gravity * p.cg_to_front + transfer) / l).max(0.0),
    };

    let (acc, ax, forces) = accelerations(p, s.v_x, s.v_y, s.yaw_rate, &u);
    let eps = 1e-6;
    let (acc_vy, _, _) = accelerations(p, s.v_x, s.v_y + eps, s.yaw_rate, &u);
    let (acc_r, _, _) = accelerations(p, s.v_x, s.v_y, s.yaw_rate + eps, &u);
    let j = [
        [(acc_vy[1] - acc[1]) / eps, (acc_r[1] - acc[1]) / eps],
        [(acc_vy[2] - acc[2]) / eps, (acc_r[2] - acc[2]) / eps],
    ];
    let m = [
        [1.0 - h * j[0][0], -h * j[0][1]],
        [-h * j[1][0], 1.0 - h * j[1][1]],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let (rhs_y, rhs_r) = (h * acc[1], h * acc[2]);
    let (d_vy, d_r) = if det.abs() > 1e-12 {
        (
            (m[1][1] * rhs_y - m[0][1] * rhs_r) / det,
            (m[0][0] * rhs_r - m[1][0] * rhs_y) / det,
        )
    } else {
        (rhs_y, rhs_r)
    };

    let mut v_x = s.v_x + h * acc[0];
    // braking and rolling resistance stop the car; they never reverse it
    if s.v_x > 0.0 && v_x < 0.0 && a.throttle == 0.0 {
        v_x = 0.0;
    }
    s.v_x = v_x;
    s.v_y += d_vy;
    s.yaw_rate += d_r;
    s.long_accel = ax;
    s.yaw += h * s.yaw_rate;
    let (sin, cos) = s.yaw.sin_cos();
    s.x += h * (s.v_x * cos - s.v_y * sin);
    s.y += h * (s.v_x * sin + s.v_y * cos);
    forces
}

#[derive(Debug, Clone, PartialEq)]
pub struct RacingStep {
    pub next_state: RaceCarState,
    pub reward: f64,
    /// Set exactly when the center of mass is outside the track at the step end.
    pub failure: bool,
    pub terminated: bool,
    /// Body touches the boundary while the center of mass is still on track.
    pub collision: bool,
    /// Velocity projected onto the forward track direction.
    pub speed_projection: f64,
    /// Signed arclength progress made during the step.
    pub progress: f64,
    /// Largest per-axle `|F| / (mu F_z)` over the substeps.
    pub max_friction_usage: f64,
    pub lateral_offset: f64,
}

pub const FAIL_WEIGHT: f64 = 1.0;
pub const COLLISION_WEIGHT: f64 = 0.2;
pub const SPEED_WEIGHT: f64 = 0.01;

/// `-fail - 0.2 * collision + 0.01 * n_track . v_ego`
pub fn racing_reward(failure: bool, collision: bool, speed_projection: f64) -> f64 {
    -FAIL_WEIGHT * f64::from(u8::from(failure)) - COLLISION_WEIGHT * f64::from(u8::from(collision))
        + SPEED_WEIGHT * speed_projection
}

/// Search window (m of arclength) around the previous projection.
const PROJECTION_WINDOW: f64 = 30.0;

/// Integrates one control interval of `dt` with `substeps` physics substeps and scores it.
pub fn racing_step(
    state: &RaceCarState,
    action: &RacingAction,
    track: &Track,
    params: &VehicleParams,
    dt: f64,
    substeps: usize,
) -> Result<RacingStep> {
    if !state.is_finite() {
        return Err(EnvError::NonFinite("race car state"));
    }
    if track.len() < 4 || !(track.length() > 0.0) {
        return Err(EnvError::MalformedTrack("degenerate track".into()));
    }
    if !(dt > 0.0) || substeps == 0 {
        return Err(EnvError::InvalidConfig("dt and substeps must be positive".into()));
    }
    action.check()?;
    let action = RacingAction {
        throttle: action.throttle.clamp(0.0, 1.0),
        brake: action.brake.clamp(0.0, 1.0),
        steer: action.steer.clamp(-1.0, 1.0),
    };
    let h = dt / substeps as f64;
    let mut next = *state;
    let mut usage: f64 = 0.0;
    for _ in 0..substeps {
        let forces = substep(params, &mut next, &action, h);
        usage = usage.max(forces.friction_usage(params));
    }
    if !next.is_finite() {
        return Err(EnvError::NonFinite("integrated race car state"));
    }
    let proj = track.project(next.position(), Some((state.arclength, PROJECTION_WINDOW)));
    next.arclength = proj.s;
    let failure = proj.lateral.abs() > track.half_width_at(proj.s);
    let collision = !failure
        && next.corners(params).iter().any(|&c| {
            let pc = track.project(c, Some((proj.s, PROJECTION_WINDOW)));
            pc.lateral.abs() > track.half_width_at(pc.s)
        });
    let tangent = track.tangent_at(proj.s);
    let v = next.velocity();
    let speed_projection = tangent[0] * v[0] + tangent[1] * v[1];
    Ok(RacingStep {
        next_state: next,
        reward: racing_reward(failure, collision, speed_projection),
        failure,
        terminated: failure,
        collision,
        speed_projection,
        progress: track.signed_distance(state.arclength, proj.s),
        max_friction_usage: usage,
        lateral_offset: proj.lateral,
    })
}

/// `[v_x, v_y, yaw_rate, steer, x_1..x_n, y_1..y_n]`: centerline points at
/// `spacing, 2 * spacing, ..., n * spacing` metres ahead, in the vehicle frame.
pub fn observe(state: &RaceCarState, track: &Track, n_points: usize, lookahead: f64) -> Vec<f64> {
    let mut obs = Vec::with_capacity(4 + 2 * n_points);
    obs.extend_from_slice(&[state.v_x, state.v_y, state.yaw_rate, state.steer]);
    let spacing = lookahead / n_points as f64;
    let (sin, cos) = state.yaw.sin_cos();
    let rel: Vec<Point> = (1..=n_points)
        .map(|i| {
            let p = track.point_at(state.arclength + spacing * i as f64);
            let (dx, dy) = (p[0] - state.x, p[1] - state.y);
            [cos * dx + sin * dy, -sin * dx + cos * dy]
        })
        .collect();
    obs.extend(rel.iter().map(|p| p[0]));
    obs.extend(rel.iter().map(|p| p[1]));
    obs
}

/// Circumradius through three centerline samples at the given distances ahead, capped.
pub fn curve_radius_ahead(state: &RaceCarState, track: &Track, preview: [f64; 3], cap: f64) -> f64 {
    let s = state.arclength;
    circumradius(
        track.point_at(s + preview[0]),
        track.point_at(s + preview[1]),
        track.point_at(s + preview[2]),
        cap,
    )
}
