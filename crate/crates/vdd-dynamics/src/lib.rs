//! Parameterized kinematic bicycle model of the ego vehicle: forward stepping,
//! analytic inverse dynamics, parameter-ratio context vectors, and
//! least-squares parameter identification from logged transitions.

mod bicycle;
mod context;
mod fit;

pub use bicycle::{
    exceeds_lateral_limit, f_acc, f_sw, inverse_dynamics, step_body, step_ego, wrap_angle,
    BodyState,
};
pub use context::make_context;
pub use fit::{dynamics_mse_and_grad, fit_params, FitOptions, FitResult, Transition};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DynError {
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("nominal parameter component is zero")]
    ZeroNominal,
    #[error("empty transition dataset")]
    EmptyDataset,
}

/// Ego kinematic state relative to the end waypoint of the reference lane.
/// `dx`/`dy` are longitudinal/lateral offsets in the lane frame, `dpsi` the
/// relative heading in (-pi, pi]. `yaw_rate` and `accel` hold the
/// instantaneous rates realized on the step that produced this state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub dx: f64,
    pub dy: f64,
    pub dpsi: f64,
    pub v: f64,
    pub yaw_rate: f64,
    pub accel: f64,
}

impl EgoState {
    pub fn zeroed() -> Self {
        EgoState {
            dx: 0.0,
            dy: 0.0,
            dpsi: 0.0,
            v: 0.0,
            yaw_rate: 0.0,
            accel: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.dx, self.dy, self.dpsi, self.v, self.yaw_rate, self.accel]
            .iter()
            .all(|x| x.is_finite())
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.dx, self.dy, self.dpsi, self.v, self.yaw_rate, self.accel]
    }
}

/// Physical parameter vector of the bicycle model. All strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// distance between axles, m
    pub wheelbase: f64,
    /// max front wheel angle, rad (< pi/2)
    pub max_steer: f64,
    /// full-throttle drive force, N
    pub engine_gain: f64,
    /// full-brake force, N
    pub brake_gain: f64,
    /// aerodynamic drag, N s^2/m^2
    pub drag_coeff: f64,
}

impl VehicleParams {
    /// Training-vehicle defaults: 1100 kg, 40 degree steering limit.
    pub fn nominal() -> Self {
        VehicleParams {
            mass: 1100.0,
            wheelbase: 2.5,
            max_steer: 40.0_f64.to_radians(),
            engine_gain: 6600.0,
            brake_gain: 11000.0,
            drag_coeff: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), DynError> {
        let fields = self.to_array();
        if fields.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(DynError::InvalidParams(format!("{self:?}")));
        }
        if self.max_steer >= std::f64::consts::FRAC_PI_2 {
            return Err(DynError::InvalidParams(format!(
                "max_steer {} must be < pi/2",
                self.max_steer
            )));
        }
        Ok(())
    }

    /// Grid-evaluation helper: scale mass and max steering angle.
    pub fn scaled(&self, mass_scale: f64, steer_scale: f64) -> Self {
        VehicleParams {
            mass: self.mass * mass_scale,
            max_steer: self.max_steer * steer_scale,
            ..*self
        }
    }

    /// Fixed field order used by context vectors and identification:
    /// [mass, wheelbase, max_steer, engine_gain, brake_gain, drag_coeff]
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.mass,
            self.wheelbase,
            self.max_steer,
            self.engine_gain,
            self.brake_gain,
            self.drag_coeff,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        VehicleParams {
            mass: a[0],
            wheelbase: a[1],
            max_steer: a[2],
            engine_gain: a[3],
            brake_gain: a[4],
            drag_coeff: a[5],
        }
    }
}

/// Normalized control input; both channels clamped to [-1, 1] on use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub steer: f64,
    pub throttle_brake: f64,
}

impl Action {
    pub fn new(steer: f64, throttle_brake: f64) -> Self {
        Action {
            steer,
            throttle_brake,
        }
    }

    pub fn zero() -> Self {
        Action::new(0.0, 0.0)
    }

    pub fn clamped(&self) -> Self {
        Action {
            steer: self.steer.clamp(-1.0, 1.0),
            throttle_brake: self.throttle_brake.clamp(-1.0, 1.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.steer.is_finite() && self.throttle_brake.is_finite()
    }
}

/// Per-parameter ratio theta'/theta; all ones for the nominal vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynContext {
    pub ratios: [f64; 6],
}

impl DynContext {
    pub fn nominal() -> Self {
        DynContext { ratios: [1.0; 6] }
    }

    pub const LEN: usize = 6;
}
