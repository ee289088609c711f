//! Intelligent Driver Model car-following law for scripted traffic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdmParams {
    /// desired free-flow speed, m/s
    pub v0: f64,
    /// max acceleration, m/s^2
    pub a_max: f64,
    /// comfortable braking, m/s^2
    pub b_comf: f64,
    /// emergency braking, m/s^2
    pub b_max: f64,
    /// jam distance, m
    pub s0: f64,
    /// desired time headway, s
    pub t_headway: f64,
    /// free-road exponent
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            v0: 8.0,
            a_max: 1.5,
            b_comf: 2.0,
            b_max: 6.0,
            s0: 2.0,
            t_headway: 1.5,
            delta: 4.0,
        }
    }
}

/// IDM acceleration: a_max (1 - (v/v0)^delta - (s*/gap)^2),
/// s* = s0 + v T + v dv / (2 sqrt(a_max b_comf)).
/// `gap <= 0` returns the emergency brake value.
pub fn idm_accel(gap: f64, v: f64, v_lead: f64, p: &IdmParams) -> f64 {
    if gap <= 0.0 {
        return -p.b_max;
    }
    let dv = v - v_lead;
    let s_star = p.s0 + v * p.t_headway + v * dv / (2.0 * (p.a_max * p.b_comf).sqrt());
    let a = p.a_max * (1.0 - (v / p.v0).powf(p.delta) - (s_star.max(0.0) / gap).powi(2));
    a.clamp(-p.b_max, p.a_max)
}

/// Free-road IDM (no leader).
pub fn idm_free_accel(v: f64, p: &IdmParams) -> f64 {
    (p.a_max * (1.0 - (v / p.v0).powf(p.delta))).clamp(-p.b_max, p.a_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_at_free_speed_with_huge_gap() {
        let p = IdmParams::default();
        let a = idm_accel(1e9, p.v0, p.v0, &p);
        assert!(a.abs() < 1e-3, "a = {a}");
    }

    #[test]
    fn standstill_at_jam_distance_holds() {
        // v = 0, gap = s0, dv = 0: s* = s0, so a = a_max (1 - 0 - 1) = 0
        let p = IdmParams::default();
        let a = idm_accel(p.s0, 0.0, 0.0, &p);
        assert!(a.abs() < 1e-12, "a = {a}");
    }

    #[test]
    fn tight_gap_at_speed_brakes_hard() {
        let p = IdmParams::default();
        let a = idm_accel(p.s0, p.v0, p.v0, &p);
        assert!(a < -2.0, "a = {a}");
    }

    #[test]
    fn nonpositive_gap_is_emergency() {
        let p = IdmParams::default();
        assert_eq!(idm_accel(0.0, 5.0, 5.0, &p), -p.b_max);
        assert_eq!(idm_accel(-1.0, 5.0, 5.0, &p), -p.b_max);
    }

    #[test]
    fn accel_decreases_with_closing_speed() {
        let p = IdmParams::default();
        let slow_close = idm_accel(20.0, 5.0, 5.0, &p);
        let fast_close = idm_accel(20.0, 8.0, 2.0, &p);
        assert!(fast_close < slow_close);
    }
}
