use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::LossVariant;
use crate::error::{Error, Result};

/// Physical constants of the swing-up task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub mass_kg: f64,
    pub length_m: f64,
    pub gravity_mps2: f64,
    pub friction: f64,
    pub dt_seconds: f64,
    pub max_speed_radps: f64,
    /// Available torques in newtons, in tie-breaking order.
    pub torques: Vec<f64>,
    /// `|theta|` at or below this counts as upright for the discrete loss.
    pub goal_tolerance_rad: f64,
    /// Validation rollouts count as holding upright while `|theta|` stays below this.
    pub hold_tolerance_rad: f64,
    /// Training episodes start outside `|theta| < init_exclusion_rad`.
    pub init_exclusion_rad: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass_kg: 1.0,
            length_m: 1.0,
            gravity_mps2: 9.81,
            friction: 0.01,
            dt_seconds: 0.05,
            max_speed_radps: 4.0,
            torques: vec![-5.0, -3.0, 0.0, 3.0, 5.0],
            goal_tolerance_rad: 0.05,
            hold_tolerance_rad: 0.3,
            init_exclusion_rad: 0.1,
        }
    }
}

/// `theta = 0` is upright; `theta` lives in `[-pi, pi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.theta, self.theta_dot]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        PendulumState {
            theta: s[0],
            theta_dot: s[1],
        }
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2 pi.
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Explicit Euler step of
/// `theta'' = (-mu theta' + m g l sin(theta) + a) / (m l^2)`,
/// followed by angle wrapping and speed clipping.
pub fn pendulum_step(p: &PendulumParams, s: PendulumState, torque: f64) -> Result<PendulumState> {
    if !p.torques.contains(&torque) {
        return Err(Error::Domain(format!("torque {torque} is not in the action set")));
    }
    Ok(pendulum_step_dt(p, s, torque, p.dt_seconds))
}

pub(crate) fn pendulum_step_dt(p: &PendulumParams, s: PendulumState, torque: f64, dt: f64) -> PendulumState {
    let inertia = p.mass_kg * p.length_m * p.length_m;
    let accel = (-p.friction * s.theta_dot
        + p.mass_kg * p.gravity_mps2 * p.length_m * s.theta.sin()
        + torque)
        / inertia;
    PendulumState {
        theta: wrap_angle(s.theta + dt * s.theta_dot),
        theta_dot: (s.theta_dot + dt * accel).clamp(-p.max_speed_radps, p.max_speed_radps),
    }
}

pub fn pendulum_loss(p: &PendulumParams, s: PendulumState, variant: LossVariant) -> f64 {
    match variant {
        LossVariant::Continuous => s.theta.abs() / PI,
        LossVariant::Discrete => {
            if s.theta.abs() <= p.goal_tolerance_rad {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// Kinetic plus potential energy, zero potential at the pivot height.
pub fn pendulum_energy(p: &PendulumParams, s: PendulumState) -> f64 {
    let inertia = p.mass_kg * p.length_m * p.length_m;
    0.5 * inertia * s.theta_dot * s.theta_dot + p.mass_kg * p.gravity_mps2 * p.length_m * s.theta.cos()
}
