//! Environment reward: R = c1 * (d_t - d_{t-1}) + c2 * v / v_max + R_term.

use serde::{Deserialize, Serialize};

use crate::env::Event;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardConfig {
    pub c1: f64,
    pub c2: f64,
    /// m/s
    pub v_max: f64,
    pub success_bonus: f64,
    pub off_road_penalty: f64,
    pub collision_penalty: f64,
    pub timeout_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            c1: 1.0,
            c2: 0.1,
            v_max: 50.0 / 3.6, // 50 km/h
            success_bonus: 10.0,
            off_road_penalty: -10.0,
            collision_penalty: -20.0,
            timeout_penalty: 0.0,
        }
    }
}

impl RewardConfig {
    pub fn terminal(&self, event: Event) -> f64 {
        match event {
            Event::None => 0.0,
            Event::Success => self.success_bonus,
            Event::OffRoad => self.off_road_penalty,
            Event::Collision => self.collision_penalty,
            Event::Timeout => self.timeout_penalty,
        }
    }
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

pub fn compute_reward(
    prev_progress: f64,
    new_progress: f64,
    speed: f64,
    event: Event,
    cfg: &RewardConfig,
) -> f64 {
    let dd = finite_or_zero(new_progress) - finite_or_zero(prev_progress);
    let v = finite_or_zero(speed);
    cfg.c1 * dd + cfg.c2 * (v / cfg.v_max) + cfg.terminal(event)
}
