//! Least-squares identification of (mass, max_steer, engine_gain, brake_gain)
//! from logged transitions, by Levenberg-Marquardt with an analytic Jacobian.
//! Wheelbase and drag are held fixed: the drag term anchors the force/mass
//! scale that would otherwise make mass and the gains jointly unidentifiable.

use nalgebra::{Matrix4, Vector4};

use crate::bicycle::{step_ego, wrap_angle};
use crate::{Action, DynError, EgoState, VehicleParams};

#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub prev: EgoState,
    pub action: Action,
    pub next: EgoState,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iters: usize,
    /// relative step-size convergence threshold
    pub tol: f64,
    pub lambda_init: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 100,
            tol: 1e-12,
            lambda_init: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: VehicleParams,
    pub final_loss: f64,
    /// loss at each accepted iterate, starting with the initial loss
    pub loss_trace: Vec<f64>,
    pub converged: bool,
    /// set when the optimizer stalled and the best iterate was returned
    pub warning_divergent: bool,
}

/// indices of the free parameters in `VehicleParams::to_array` order
const FREE: [usize; 4] = [0, 2, 3, 4]; // mass, max_steer, engine_gain, brake_gain

fn residuals_of(t: &Transition, params: &VehicleParams, dt: f64) -> [f64; 6] {
    let pred = step_ego(&t.prev, &t.action, params, dt).expect("finite transition");
    [
        pred.dx - t.next.dx,
        pred.dy - t.next.dy,
        wrap_angle(pred.dpsi - t.next.dpsi),
        pred.v - t.next.v,
        pred.yaw_rate - t.next.yaw_rate,
        pred.accel - t.next.accel,
    ]
}

/// Jacobian of the 6 residuals w.r.t. the 4 free parameters.
fn jacobian_of(t: &Transition, p: &VehicleParams, dt: f64) -> [[f64; 4]; 6] {
    let v = t.prev.v;
    let sc = t.action.steer.clamp(-1.0, 1.0);
    let u = t.action.throttle_brake.clamp(-1.0, 1.0);
    let wheel = sc * p.max_steer;
    let cosw = wheel.cos();
    let dyaw_dms = v / p.wheelbase * sc / (cosw * cosw);
    let gain = if u >= 0.0 { p.engine_gain } else { p.brake_gain };
    let accel = (gain * u - p.drag_coeff * v * v) / p.mass;
    let dacc_dm = -accel / p.mass;
    let dacc_dge = if u >= 0.0 { u / p.mass } else { 0.0 };
    let dacc_dbg = if u < 0.0 { u / p.mass } else { 0.0 };
    // speed clamp: no sensitivity when the next speed saturates at zero
    let v_interior = v + accel * dt > 0.0;
    let vk = if v_interior { dt } else { 0.0 };
    // rows: dx, dy, dpsi, v, yaw_rate, accel; cols: m, ms, ge, bg
    [
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, dt * dyaw_dms, 0.0, 0.0],
        [vk * dacc_dm, 0.0, vk * dacc_dge, vk * dacc_dbg],
        [0.0, dyaw_dms, 0.0, 0.0],
        [dacc_dm, 0.0, dacc_dge, dacc_dbg],
    ]
}

/// Loss 0.5*sum(r^2) and its gradient w.r.t. the free parameters.
pub fn dynamics_mse_and_grad(
    transitions: &[Transition],
    params: &VehicleParams,
    dt: f64,
) -> (f64, [f64; 4]) {
    let mut loss = 0.0;
    let mut grad = [0.0; 4];
    for t in transitions {
        let r = residuals_of(t, params, dt);
        let j = jacobian_of(t, params, dt);
        for k in 0..6 {
            loss += 0.5 * r[k] * r[k];
            for c in 0..4 {
                grad[c] += r[k] * j[k][c];
            }
        }
    }
    (loss, grad)
}

fn apply_free(params: &VehicleParams, free: &Vector4<f64>) -> VehicleParams {
    let mut arr = params.to_array();
    for (slot, &idx) in FREE.iter().enumerate() {
        // keep parameters strictly positive and the wheel limit physical
        arr[idx] = free[slot].max(1e-9);
    }
    arr[2] = arr[2].min(std::f64::consts::FRAC_PI_2 - 1e-6);
    VehicleParams::from_array(arr)
}

fn free_of(params: &VehicleParams) -> Vector4<f64> {
    let arr = params.to_array();
    Vector4::new(arr[FREE[0]], arr[FREE[1]], arr[FREE[2]], arr[FREE[3]])
}

pub fn fit_params(
    transitions: &[Transition],
    theta_init: &VehicleParams,
    dt: f64,
    opts: &FitOptions,
) -> Result<FitResult, DynError> {
    if transitions.is_empty() {
        return Err(DynError::EmptyDataset);
    }
    theta_init.validate()?;

    let loss_of = |p: &VehicleParams| {
        transitions
            .iter()
            .map(|t| {
                residuals_of(t, p, dt)
                    .iter()
                    .map(|r| 0.5 * r * r)
                    .sum::<f64>()
            })
            .sum::<f64>()
    };

    let mut params = *theta_init;
    let mut lambda = opts.lambda_init;
    let mut loss = loss_of(&params);
    let mut trace = vec![loss];
    let mut best = (params, loss);
    let mut converged = false;

    for _ in 0..opts.max_iters {
        // assemble normal equations
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for t in transitions {
            let r = residuals_of(t, &params, dt);
            let j = jacobian_of(t, &params, dt);
            for k in 0..6 {
                for a in 0..4 {
                    jtr[a] += j[k][a] * r[k];
                    for b in 0..4 {
                        jtj[(a, b)] += j[k][a] * j[k][b];
                    }
                }
            }
        }

        let mut accepted = false;
        for _ in 0..25 {
            let mut damped = jtj;
            for i in 0..4 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(delta) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = apply_free(&params, &(free_of(&params) + delta));
            let cand_loss = loss_of(&candidate);
            if cand_loss < loss {
                let rel_step = delta.norm() / free_of(&params).norm().max(1e-12);
                params = candidate;
                loss = cand_loss;
                trace.push(loss);
                if loss < best.1 {
                    best = (params, loss);
                }
                lambda = (lambda / 3.0).max(1e-14);
                accepted = true;
                if rel_step < opts.tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // cannot improve further at any damping: treat as converged-at-floor
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    let warning_divergent = best.1 < loss - 1e-15;
    let (params, final_loss) = if warning_divergent { best } else { (params, loss) };
    Ok(FitResult {
        params,
        final_loss,
        loss_trace: trace,
        converged,
        warning_divergent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn synthetic_transitions(
        n: usize,
        truth: &VehicleParams,
        dt: f64,
        noise: f64,
        seed: u64,
    ) -> Vec<Transition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let prev = EgoState {
                    dx: rng.gen_range(-50.0..0.0),
                    dy: rng.gen_range(-3.0..3.0),
                    dpsi: rng.gen_range(-0.5..0.5),
                    v: rng.gen_range(0.5..15.0),
                    yaw_rate: 0.0,
                    accel: 0.0,
                };
                let action = Action::new(rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95));
                let mut next = step_ego(&prev, &action, truth, dt).unwrap();
                if noise > 0.0 {
                    let mut bump = |x: &mut f64| {
                        let u1: f64 = rng.gen_range(1e-12..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        *x += noise
                            * (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos();
                    };
                    bump(&mut next.dx);
                    bump(&mut next.dy);
                    bump(&mut next.dpsi);
                    bump(&mut next.v);
                    bump(&mut next.yaw_rate);
                    bump(&mut next.accel);
                }
                Transition { prev, action, next }
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let truth = VehicleParams::nominal();
        let data = synthetic_transitions(50, &truth, 0.1, 0.0, 3);
        let biased = VehicleParams::from_array({
            let mut a = truth.to_array();
            a[0] *= 1.2;
            a[2] *= 0.9;
            a[3] *= 1.1;
            a[4] *= 0.8;
            a
        });
        let (_, grad) = dynamics_mse_and_grad(&data, &biased, 0.1);
        for (slot, &idx) in FREE.iter().enumerate() {
            let mut lo = biased.to_array();
            let mut hi = lo;
            let eps = 1e-5 * lo[idx].abs().max(1.0);
            hi[idx] += eps;
            lo[idx] -= eps;
            let (lh, _) = dynamics_mse_and_grad(&data, &VehicleParams::from_array(hi), 0.1);
            let (ll, _) = dynamics_mse_and_grad(&data, &VehicleParams::from_array(lo), 0.1);
            let fd = (lh - ll) / (2.0 * eps);
            let rel = (fd - grad[slot]).abs() / fd.abs().max(grad[slot].abs()).max(1e-12);
            assert!(rel < 1e-4, "param {idx}: analytic {} vs fd {fd}", grad[slot]);
        }
    }

    #[test]
    fn recovers_truth_from_noiseless_data() {
        let truth = VehicleParams::nominal();
        let data = synthetic_transitions(500, &truth, 0.1, 0.0, 7);
        let init = VehicleParams::from_array({
            let mut a = truth.to_array();
            for idx in FREE {
                a[idx] *= 1.3;
            }
            a
        });
        let fit = fit_params(&data, &init, 0.1, &FitOptions::default()).unwrap();
        let t = truth.to_array();
        let f = fit.params.to_array();
        for idx in FREE {
            let rel = (f[idx] - t[idx]).abs() / t[idx];
            assert!(rel < 0.01, "param {idx}: {} vs {} (rel {rel})", f[idx], t[idx]);
        }
        // loss non-increasing over accepted iterates
        for w in fit.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn noise_floor_respected() {
        let truth = VehicleParams::nominal();
        let sigma = 0.01;
        let data = synthetic_transitions(500, &truth, 0.1, sigma, 11);
        let init = VehicleParams::from_array({
            let mut a = truth.to_array();
            for idx in FREE {
                a[idx] *= 1.3;
            }
            a
        });
        let fit = fit_params(&data, &init, 0.1, &FitOptions::default()).unwrap();
        let mean_sq = 2.0 * fit.final_loss / data.len() as f64;
        assert!(
            mean_sq <= 1.5 * sigma * sigma * 6.0,
            "mean squared residual {mean_sq}"
        );
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let p = VehicleParams::nominal();
        assert!(matches!(
            fit_params(&[], &p, 0.1, &FitOptions::default()),
            Err(DynError::EmptyDataset)
        ));
    }
}
