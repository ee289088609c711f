//! Kinematic bicycle model:
//!   x' = v cos(psi), y' = v sin(psi), psi' = v/l_wb * tan(f_sw(a_lat)),
//!   v' = f_acc(a_long, v)
//! integrated with explicit Euler. Speed is clamped at zero (no reverse).

use crate::{Action, DynError, EgoState, VehicleParams};

/// A pose + speed in an arbitrary planar frame; the same stepping applies to
/// world poses and to lane-frame ego offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

/// Steering input [-1, 1] to front wheel angle, clipped at the physical limit.
pub fn f_sw(steer: f64, params: &VehicleParams) -> f64 {
    (steer.clamp(-1.0, 1.0) * params.max_steer).clamp(-params.max_steer, params.max_steer)
}

/// Throttle/brake input [-1, 1] to acceleration. Linear force gain (engine for
/// positive input, brake for negative) against quadratic drag, over mass.
pub fn f_acc(throttle_brake: f64, v: f64, params: &VehicleParams) -> f64 {
    let u = throttle_brake.clamp(-1.0, 1.0);
    let gain = if u >= 0.0 {
        params.engine_gain
    } else {
        params.brake_gain
    };
    (gain * u - params.drag_coeff * v * v) / params.mass
}

/// One Euler step of the bicycle model. Returns the next body state plus the
/// instantaneous (yaw_rate, accel) used.
pub fn step_body(
    s: &BodyState,
    a: &Action,
    params: &VehicleParams,
    dt: f64,
) -> (BodyState, f64, f64) {
    let wheel = f_sw(a.steer, params);
    let yaw_rate = s.v / params.wheelbase * wheel.tan();
    let accel = f_acc(a.throttle_brake, s.v, params);
    let next = BodyState {
        x: s.x + s.v * s.psi.cos() * dt,
        y: s.y + s.v * s.psi.sin() * dt,
        psi: wrap_angle(s.psi + yaw_rate * dt),
        v: (s.v + accel * dt).max(0.0),
    };
    (next, yaw_rate, accel)
}

/// One Euler step on the lane-frame ego state.
pub fn step_ego(
    s: &EgoState,
    a: &Action,
    params: &VehicleParams,
    dt: f64,
) -> Result<EgoState, DynError> {
    if !s.is_finite() {
        return Err(DynError::NonFinite("ego state"));
    }
    if !a.is_finite() {
        return Err(DynError::NonFinite("action"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynError::NonFinite("dt"));
    }
    let body = BodyState {
        x: s.dx,
        y: s.dy,
        psi: s.dpsi,
        v: s.v,
    };
    let (next, yaw_rate, accel) = step_body(&body, a, params, dt);
    Ok(EgoState {
        dx: next.x,
        dy: next.y,
        dpsi: next.psi,
        v: next.v,
        yaw_rate,
        accel,
    })
}

const V_EPS: f64 = 1e-6;

/// Recover the action that reproduces `s_target`'s instantaneous (accel,
/// yaw_rate) from `s_prev` under `params`. Components needing values outside
/// the action box or the wheel-angle limit are clipped and flagged infeasible.
pub fn inverse_dynamics(
    s_prev: &EgoState,
    s_target: &EgoState,
    params: &VehicleParams,
) -> (Action, bool) {
    let mut feasible = true;

    // steering: yaw_rate = v/l * tan(wheel)
    let steer = if s_prev.v < V_EPS {
        if s_target.yaw_rate.abs() > 1e-9 {
            feasible = false;
        }
        0.0
    } else {
        let wheel = (s_target.yaw_rate * params.wheelbase / s_prev.v).atan();
        if wheel.abs() > params.max_steer + 1e-12 {
            feasible = false;
        }
        wheel.clamp(-params.max_steer, params.max_steer) / params.max_steer
    };

    // acceleration: accel*mass + drag*v^2 = gain*u
    let force = s_target.accel * params.mass + params.drag_coeff * s_prev.v * s_prev.v;
    let u = if force >= 0.0 {
        force / params.engine_gain
    } else {
        force / params.brake_gain
    };
    if u.abs() > 1.0 + 1e-12 {
        feasible = false;
    }

    (
        Action {
            steer: steer.clamp(-1.0, 1.0),
            throttle_brake: u.clamp(-1.0, 1.0),
        },
        feasible,
    )
}

/// Kinematic-validity check: lateral acceleration above 0.5*mu*g. Logged by
/// the simulator, never enforced.
pub fn exceeds_lateral_limit(v: f64, yaw_rate: f64, mu: f64) -> bool {
    (v * yaw_rate).abs() > 0.5 * mu * 9.81
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn nominal() -> VehicleParams {
        VehicleParams::nominal()
    }

    #[test]
    fn f_sw_examples() {
        let p = nominal();
        assert_eq!(f_sw(0.0, &p), 0.0);
        assert_abs_diff_eq!(f_sw(1.0, &p), 0.698, epsilon = 1e-3);
        assert_abs_diff_eq!(f_sw(-0.5, &p), -0.349, epsilon = 1e-3);
        // clipped beyond the box
        assert_abs_diff_eq!(f_sw(3.0, &p), p.max_steer, epsilon = 1e-12);
    }

    #[test]
    fn f_acc_examples() {
        let mut p = nominal();
        p.drag_coeff = 2.0;
        assert_eq!(f_acc(0.0, 0.0, &p), 0.0);
        let mut q = nominal();
        q.mass = 1100.0;
        q.engine_gain = 6600.0;
        assert_abs_diff_eq!(f_acc(0.5, 0.0, &q), 3.0, epsilon = 1e-12);
        q.mass = 2200.0;
        assert_abs_diff_eq!(f_acc(0.5, 0.0, &q), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn mass_scale_equivariance_at_zero_drag() {
        let mut p = nominal();
        p.drag_coeff = 1e-300; // params must stay strictly positive
        let mut p2 = p;
        p2.mass *= 2.0;
        for u in [-0.8, -0.2, 0.3, 1.0] {
            for v in [0.0, 3.0, 12.0] {
                assert_abs_diff_eq!(f_acc(u, v, &p), 2.0 * f_acc(u, v, &p2), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rest_state_is_fixed_point() {
        let p = nominal();
        let s = EgoState::zeroed();
        let next = step_ego(&s, &Action::zero(), &p, 0.1).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn straight_line_advance() {
        let p = nominal();
        let mut q = p;
        q.drag_coeff = 1e-300; // so f_acc(0, v) = 0 exactly
        let s = EgoState {
            dx: 0.0,
            dy: 0.0,
            dpsi: 0.0,
            v: 10.0,
            yaw_rate: 0.0,
            accel: 0.0,
        };
        let next = step_ego(&s, &Action::zero(), &q, 0.1).unwrap();
        assert_abs_diff_eq!(next.dx, 1.0, epsilon = 1e-12);
        assert_eq!(next.dy, 0.0);
        assert_eq!(next.dpsi, 0.0);
        assert_abs_diff_eq!(next.v, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn turning_yaw_rate_matches_closed_form() {
        // v=5, l_wb=2.5, wheel angle 0.1 -> psi_dot = 2 tan(0.1) = 0.20067
        let mut p = nominal();
        p.wheelbase = 2.5;
        let steer = 0.1 / p.max_steer;
        let s = EgoState {
            v: 5.0,
            ..EgoState::zeroed()
        };
        let next = step_ego(&s, &Action::new(steer, 0.0), &p, 0.1).unwrap();
        assert_abs_diff_eq!(next.yaw_rate, 2.0 * 0.1_f64.tan(), epsilon = 1e-9);
        assert_abs_diff_eq!(next.yaw_rate, 0.20067, epsilon = 1e-5);
    }

    #[test]
    fn non_finite_inputs_error() {
        let p = nominal();
        let s = EgoState {
            v: f64::NAN,
            ..EgoState::zeroed()
        };
        assert!(step_ego(&s, &Action::zero(), &p, 0.1).is_err());
        let s2 = EgoState::zeroed();
        assert!(step_ego(&s2, &Action::new(f64::INFINITY, 0.0), &p, 0.1).is_err());
    }

    #[test]
    fn speed_clamped_at_zero() {
        let p = nominal();
        let s = EgoState {
            v: 0.1,
            ..EgoState::zeroed()
        };
        let next = step_ego(&s, &Action::new(0.0, -1.0), &p, 0.5).unwrap();
        assert_eq!(next.v, 0.0);
    }

    #[test]
    fn inverse_round_trip() {
        let p = nominal();
        let s = EgoState {
            dx: -20.0,
            dy: 0.5,
            dpsi: 0.05,
            v: 8.0,
            yaw_rate: 0.0,
            accel: 0.0,
        };
        for (st, tb) in [(0.3, 0.4), (-0.7, -0.5), (0.9, 0.99), (0.0, 0.0)] {
            let a = Action::new(st, tb);
            let target = step_ego(&s, &a, &p, 0.1).unwrap();
            let (rec, feasible) = inverse_dynamics(&s, &target, &p);
            assert!(feasible);
            assert_abs_diff_eq!(rec.steer, st, epsilon = 1e-9);
            assert_abs_diff_eq!(rec.throttle_brake, tb, epsilon = 1e-9);
        }
    }

    #[test]
    fn inverse_mass_doubling_doubles_throttle() {
        let p = nominal();
        let mut q = p;
        q.mass *= 2.0;
        q.drag_coeff = 1e-300;
        let mut p0 = p;
        p0.drag_coeff = 1e-300;
        let s = EgoState {
            v: 5.0,
            ..EgoState::zeroed()
        };
        let target = step_ego(&s, &Action::new(0.0, 0.4), &p0, 0.1).unwrap();
        let (rec, feasible) = inverse_dynamics(&s, &target, &q);
        assert!(feasible);
        assert_abs_diff_eq!(rec.throttle_brake, 0.8, epsilon = 1e-9);
    }

    #[test]
    fn inverse_clips_when_steer_limit_halved() {
        let p = nominal();
        let mut q = p;
        q.max_steer *= 0.5;
        let s = EgoState {
            v: 6.0,
            ..EgoState::zeroed()
        };
        let target = step_ego(&s, &Action::new(1.0, 0.0), &p, 0.1).unwrap();
        let (rec, feasible) = inverse_dynamics(&s, &target, &q);
        assert!(!feasible);
        assert_eq!(rec.steer, 1.0); // boundary of the action box
    }

    #[test]
    fn inverse_infeasible_target_lands_on_boundary() {
        let p = nominal();
        let s = EgoState {
            v: 2.0,
            ..EgoState::zeroed()
        };
        let target = EgoState {
            yaw_rate: 50.0,
            accel: 40.0,
            ..EgoState::zeroed()
        };
        let (rec, feasible) = inverse_dynamics(&s, &target, &p);
        assert!(!feasible);
        assert!(rec.steer == 1.0 || rec.steer == -1.0);
        assert!(rec.throttle_brake == 1.0 || rec.throttle_brake == -1.0);
    }

    #[test]
    fn wrap_angle_range() {
        for a in [-10.0, -3.2, -std::f64::consts::PI, 0.0, 3.2, 10.0] {
            let w = wrap_angle(a);
            assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
            assert_abs_diff_eq!((w - a).rem_euclid(2.0 * std::f64::consts::PI), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fine_step_integrator_agreement() {
        // one dt=0.1 Euler step vs 100 substeps of dt/100 on a turning case:
        // max state error < 0.05 * dt * v
        let p = nominal();
        let dt = 0.1;
        let s0 = EgoState {
            dx: 0.0,
            dy: 0.0,
            dpsi: 0.2,
            v: 5.0,
            yaw_rate: 0.0,
            accel: 0.0,
        };
        let a = Action::new(0.1_f64 / p.max_steer, 0.3);
        let coarse = step_ego(&s0, &a, &p, dt).unwrap();
        let mut fine = s0;
        for _ in 0..100 {
            fine = step_ego(&fine, &a, &p, dt / 100.0).unwrap();
        }
        let bound = 0.05 * dt * s0.v;
        for (c, f) in coarse.to_array()[..4].iter().zip(&fine.to_array()[..4]) {
            assert!(
                (c - f).abs() < bound,
                "coarse {c} vs fine {f}, bound {bound}"
            );
        }
    }

    #[test]
    fn lateral_limit_flag() {
        assert!(!exceeds_lateral_limit(5.0, 0.2, 1.0)); // 1 m/s^2
        assert!(exceeds_lateral_limit(15.0, 0.4, 1.0)); // 6 m/s^2
    }
}
