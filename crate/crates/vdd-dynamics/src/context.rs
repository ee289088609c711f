//! Context vector: elementwise ratio of shifted to nominal parameters.

use crate::{DynContext, DynError, VehicleParams};

pub fn make_context(
    shifted: &VehicleParams,
    nominal: &VehicleParams,
) -> Result<DynContext, DynError> {
    let s = shifted.to_array();
    let n = nominal.to_array();
    let mut ratios = [0.0; 6];
    for i in 0..6 {
        if n[i] == 0.0 || !n[i].is_finite() {
            return Err(DynError::ZeroNominal);
        }
        ratios[i] = s[i] / n[i];
    }
    Ok(DynContext { ratios })
}
