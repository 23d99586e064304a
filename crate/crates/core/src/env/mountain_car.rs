use serde::{Deserialize, Serialize};

use super::LossVariant;
use crate::error::{Error, Result};

/// Constants of the classic Moore mountain car on the slope `y = sin(3x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MountainCarParams {
    pub force: f64,
    pub gravity: f64,
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub goal_velocity: f64,
    /// Training episodes start at rest with `x` uniform in this range.
    pub init_position_low: f64,
    pub init_position_high: f64,
}

impl Default for MountainCarParams {
    fn default() -> Self {
        MountainCarParams {
            force: 0.001,
            gravity: 0.0025,
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            goal_position: 0.5,
            goal_velocity: 0.0,
            init_position_low: -0.6,
            init_position_high: -0.4,
        }
    }
}

/// Force indices in tie-breaking order.
pub const MOUNTAIN_CAR_ACTIONS: [i32; 3] = [-1, 0, 1];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MountainCarState {
    pub x: f64,
    pub v: f64,
}

impl MountainCarState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.v]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        MountainCarState { x: s[0], v: s[1] }
    }
}

pub fn mountaincar_step(p: &MountainCarParams, s: MountainCarState, action: i32) -> Result<MountainCarState> {
    if !MOUNTAIN_CAR_ACTIONS.contains(&action) {
        return Err(Error::Domain(format!("force index {action} is not in {{-1, 0, 1}}")));
    }
    let mut v = (s.v + p.force * action as f64 - p.gravity * (3.0 * s.x).cos())
        .clamp(-p.max_speed, p.max_speed);
    let x = (s.x + v).clamp(p.min_position, p.max_position);
    if x == p.min_position && v < 0.0 {
        v = 0.0;
    }
    Ok(MountainCarState { x, v })
}

pub fn mountaincar_is_goal(p: &MountainCarParams, s: MountainCarState) -> bool {
    s.x >= p.goal_position && s.v >= p.goal_velocity
}

pub fn mountaincar_loss(p: &MountainCarParams, s: MountainCarState, variant: LossVariant) -> f64 {
    match variant {
        LossVariant::Continuous => {
            ((p.goal_position - s.x).max(0.0) + (p.goal_velocity - s.v).max(0.0)) / 2.0
        }
        LossVariant::Discrete => {
            if mountaincar_is_goal(p, s) {
                0.0
            } else {
                1.0
            }
        }
    }
}
