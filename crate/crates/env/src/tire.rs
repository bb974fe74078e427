//! Coupled Dugoff tire model.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireParams {
    /// Longitudinal slip stiffness (N per unit slip).
    pub longitudinal_stiffness: f64,
    /// Cornering stiffness (N/rad).
    pub cornering_stiffness: f64,
    pub friction: f64,
}

/// Longitudinal and lateral axle forces for a given slip state.
///
/// In the linear region `F_x = C_x * slip`, `F_lat = -C_a * tan(alpha)`. Both are
/// scaled by the Dugoff factor `f(l) = l * (2 - l)` for `l < 1`, where
/// `l = mu * F_z / (2 * |(C_x * slip, C_a * tan(alpha))|)`. The resultant never
/// exceeds `mu * F_z`.
pub fn tire_forces(slip_long: f64, slip_angle: f64, normal_load: f64, p: &TireParams) -> (f64, f64) {
    if normal_load <= 0.0 {
        return (0.0, 0.0);
    }
    let fx_lin = p.longitudinal_stiffness * slip_long;
    let fy_lin = -p.cornering_stiffness * slip_angle.tan();
    let demand = fx_lin.hypot(fy_lin);
    if demand == 0.0 {
        return (0.0, 0.0);
    }
    let lam = p.friction * normal_load / (2.0 * demand);
    let scale = if lam < 1.0 { lam * (2.0 - lam) } else { 1.0 };
    (fx_lin * scale, fy_lin * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: TireParams = TireParams {
        longitudinal_stiffness: 120_000.0,
        cornering_stiffness: 80_000.0,
        friction: 1.0,
    };

    #[test]
    fn zero_slip_zero_force() {
        assert_eq!(tire_forces(0.0, 0.0, 5000.0, &P), (0.0, 0.0));
        assert_eq!(tire_forces(0.3, 0.2, 0.0, &P), (0.0, 0.0));
    }

    #[test]
    fn saturates_at_high_slip() {
        let (fx, fy) = tire_forces(0.0, 0.5, 5000.0, &P);
        assert_eq!(fx, 0.0);
        assert!(fy < 0.0 && fy.abs() <= 5000.0);
        assert!(fy.abs() > 0.9 * 5000.0);
    }
}
