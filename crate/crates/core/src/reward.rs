//! Per-robot, per-step reward terms.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, CollisionEvent};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Arrival bonus, shorter paths earn more.
    pub r_m: f64,
    /// Sharp-turn penalty.
    pub r_s: f64,
    /// Robot-robot collision penalty.
    pub r_c: f64,
    /// Obstacle proximity penalty.
    pub r_o: f64,
    /// Dense progress reward.
    pub r_p: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(r_m: f64, r_s: f64, r_c: f64, r_o: f64, r_p: f64) -> Self {
        Self {
            r_m,
            r_s,
            r_c,
            r_o,
            r_p,
            total: r_m + r_s + r_c + r_o + r_p,
        }
    }
}

/// `300 - 100 * d_a / d_s` on arrival, where `d_a` is the travelled length
/// and `d_s` the straight start-goal distance.
pub fn goal_reward(d_a: f64, d_s: f64, reached: bool) -> f64 {
    if reached {
        300.0 - 100.0 * d_a / d_s
    } else {
        0.0
    }
}

pub fn smoothness_penalty(prev_heading: f64, new_heading: f64) -> f64 {
    if wrap_angle(new_heading - prev_heading).abs() > FRAC_PI_4 {
        -5.0
    } else {
        0.0
    }
}

pub fn robot_collision_penalty(robot: usize, events: &[CollisionEvent]) -> f64 {
    let hit = events
        .iter()
        .any(|e| matches!(e, CollisionEvent::RobotRobot { .. }) && e.involves(robot));
    if hit {
        -100.0
    } else {
        0.0
    }
}

pub fn obstacle_proximity_penalty(d_o: f64, r: f64) -> f64 {
    if d_o < r {
        -100.0
    } else if d_o < 2.0 * r {
        -20.0
    } else {
        0.0
    }
}

pub fn progress_reward(d_g: f64, d_m: f64) -> f64 {
    if d_g < d_m {
        1.0 - d_g / d_m
    } else {
        0.0
    }
}
