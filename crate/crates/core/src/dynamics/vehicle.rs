use serde::{Deserialize, Serialize};

use super::{check_bounds, ControlAffine};
use crate::error::{Error, Result};

/// Parameters of the dynamic single-track vehicle.
///
/// Lateral tire force per axle is `μ·F_z·sin(C·atan(B·α))`; the driven rear
/// axle produces `μ·F_z·sin(C_x·atan(B_x·s))` from the longitudinal slip `s`
/// of a lumped wheel/drivetrain inertia.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    /// CG to front / rear axle (m).
    pub lf: f64,
    pub lr: f64,
    pub wheel_radius: f64,
    /// Lumped wheel plus reflected drivetrain inertia (kg·m²).
    pub wheel_inertia: f64,
    pub steer_time_constant: f64,
    pub b_lat: f64,
    pub c_lat: f64,
    pub b_long: f64,
    pub c_long: f64,
    /// Tire–road friction coefficient.
    pub mu: f64,
    /// Speed floor used in slip denominators (m/s).
    pub slip_speed_floor: f64,
    pub max_steer: f64,
    pub max_torque: f64,
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass: 1500.0,
            yaw_inertia: 2500.0,
            lf: 1.2,
            lr: 1.4,
            wheel_radius: 0.3,
            wheel_inertia: 30.0,
            steer_time_constant: 0.1,
            b_lat: 10.0,
            c_lat: 1.3,
            b_long: 5.0,
            c_long: 1.65,
            mu: 1.0,
            slip_speed_floor: 3.0,
            max_steer: 0.5,
            max_torque: 2500.0,
            gravity: 9.81,
        }
    }
}

/// Eight-state single-track vehicle: `(p_x, p_y, ψ, v_x, v_y, r, δ, ω)` with
/// body-frame velocities, yaw rate `r`, steering angle `δ` and driven wheel
/// speed `ω`. Controls are `(δ_cmd, T)`: commanded steering angle and wheel
/// torque.
#[derive(Debug, Clone)]
pub struct Vehicle {
    params: VehicleParams,
    lower: [f64; 2],
    upper: [f64; 2],
}

impl Vehicle {
    pub const STATE_DIM: usize = 8;

    pub fn new(params: VehicleParams) -> Result<Self> {
        let positive = [
            params.mass,
            params.yaw_inertia,
            params.lf,
            params.lr,
            params.wheel_radius,
            params.wheel_inertia,
            params.steer_time_constant,
            params.slip_speed_floor,
            params.max_steer,
            params.max_torque,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Argument("vehicle parameters must be positive".into()));
        }
        if !(params.mu >= 0.0) {
            return Err(Error::Argument("friction coefficient must be >= 0".into()));
        }
        let lower = [-params.max_steer, -params.max_torque];
        let upper = [params.max_steer, params.max_torque];
        check_bounds(&lower, &upper)?;
        Ok(Vehicle { params, lower, upper })
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    /// Copy of this model with a different friction coefficient.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Vehicle::new(VehicleParams { mu, ..self.params.clone() })
    }

    /// Static axle loads `(front, rear)`.
    pub fn axle_loads(&self) -> (f64, f64) {
        let p = &self.params;
        let w = p.mass * p.gravity / (p.lf + p.lr);
        (w * p.lr, w * p.lf)
    }

    /// Front/rear lateral and rear longitudinal tire forces at state `x`.
    pub fn tire_forces(&self, x: &[f64]) -> (f64, f64, f64) {
        let p = &self.params;
        let (vx, vy, r, delta, omega) = (x[3], x[4], x[5], x[6], x[7]);
        let (fz_f, fz_r) = self.axle_loads();
        let vx_reg = vx.max(p.slip_speed_floor);
        let alpha_f = delta - ((vy + p.lf * r) / vx_reg).atan();
        let alpha_r = -((vy - p.lr * r) / vx_reg).atan();
        let pacejka = |d: f64, b: f64, c: f64, slip: f64| p.mu * d * (c * (b * slip).atan()).sin();
        let fy_f = pacejka(fz_f, p.b_lat, p.c_lat, alpha_f);
        let fy_r = pacejka(fz_r, p.b_lat, p.c_lat, alpha_r);
        let slip = (omega * p.wheel_radius - vx) / vx.abs().max(p.slip_speed_floor);
        let fx_r = pacejka(fz_r, p.b_long, p.c_long, slip);
        (fy_f, fy_r, fx_r)
    }
}

impl ControlAffine for Vehicle {
    fn name(&self) -> &str {
        "vehicle"
    }

    fn state_dim(&self) -> usize {
        Self::STATE_DIM
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn input_lower(&self) -> &[f64] {
        &self.lower
    }

    fn input_upper(&self) -> &[f64] {
        &self.upper
    }

    fn position_indices(&self) -> &[usize] {
        &[0, 1]
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let p = &self.params;
        let (psi, vx, vy, r, delta) = (x[2], x[3], x[4], x[5], x[6]);
        let (fy_f, fy_r, fx_r) = self.tire_forces(x);
        let (s, c) = psi.sin_cos();
        let (sd, cd) = delta.sin_cos();
        out[0] = vx * c - vy * s;
        out[1] = vx * s + vy * c;
        out[2] = r;
        out[3] = (fx_r - fy_f * sd) / p.mass + vy * r;
        out[4] = (fy_r + fy_f * cd) / p.mass - vx * r;
        out[5] = (p.lf * fy_f * cd - p.lr * fy_r) / p.yaw_inertia;
        out[6] = -delta / p.steer_time_constant;
        out[7] = -p.wheel_radius * fx_r / p.wheel_inertia;
        Ok(())
    }

    fn actuation(&self, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        out[6 * 2] = 1.0 / self.params.steer_time_constant;
        out[7 * 2 + 1] = 1.0 / self.params.wheel_inertia;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::derivative;

    #[test]
    fn straight_line_has_no_lateral_response() {
        let v = Vehicle::new(VehicleParams::default()).unwrap();
        // rolling wheel, zero slip, arbitrary heading
        for psi in [0.0, 0.7, -2.0] {
            let speed = 20.0;
            let x = [3.0, -1.0, psi, speed, 0.0, 0.0, 0.0, speed / 0.3];
            let d = derivative(&v, &x, &[0.0, 0.0]).unwrap();
            assert_eq!(d[4], 0.0, "v_y rate");
            assert_eq!(d[5], 0.0, "yaw acceleration");
            assert_eq!(d[2], 0.0);
            assert!((d[0] - speed * psi.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn friction_scales_tire_forces() {
        let v = Vehicle::new(VehicleParams::default()).unwrap();
        let low = v.with_mu(0.3).unwrap();
        let x = [0.0, 0.0, 0.0, 15.0, 0.5, 0.1, 0.05, 45.0];
        let (a, b, c) = v.tire_forces(&x);
        let (la, lb, lc) = low.tire_forces(&x);
        assert!((la - 0.3 * a).abs() < 1e-9);
        assert!((lb - 0.3 * b).abs() < 1e-9);
        assert!((lc - 0.3 * c).abs() < 1e-9);
    }

    #[test]
    fn standstill_is_finite() {
        let v = Vehicle::new(VehicleParams::default()).unwrap();
        let d = derivative(&v, &[0.0; 8], &[0.2, 100.0]).unwrap();
        assert!(d.iter().all(|x| x.is_finite()));
    }
}
