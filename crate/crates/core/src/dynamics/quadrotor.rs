use serde::{Deserialize, Serialize};

use super::{check_bounds, ControlAffine};
use crate::error::{Error, Result};

/// Rigid-body quadrotor parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub gravity: f64,
    pub max_thrust: f64,
    pub max_torque: [f64; 3],
    /// Pitch magnitude beyond which the Euler chart is rejected (rad).
    pub pitch_limit: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        QuadrotorParams {
            mass: 1.0,
            inertia: [0.02, 0.02, 0.04],
            gravity: 9.81,
            max_thrust: 20.0,
            max_torque: [0.5, 0.5, 0.2],
            pitch_limit: 85f64.to_radians(),
        }
    }
}

/// Twelve-state quadrotor: position, world-frame velocity, Z-Y-X Euler
/// angles `(φ, θ, ψ)` and body rates `(p, q, r)`. Controls are collective
/// thrust and three body torques.
#[derive(Debug, Clone)]
pub struct Quadrotor {
    params: QuadrotorParams,
    lower: [f64; 4],
    upper: [f64; 4],
}

impl Quadrotor {
    pub fn new(params: QuadrotorParams) -> Result<Self> {
        if !(params.mass > 0.0) || params.inertia.iter().any(|j| !(*j > 0.0)) {
            return Err(Error::Argument("quadrotor mass and inertia must be positive".into()));
        }
        let t = params.max_torque;
        let lower = [0.0, -t[0], -t[1], -t[2]];
        let upper = [params.max_thrust, t[0], t[1], t[2]];
        check_bounds(&lower, &upper)?;
        Ok(Quadrotor { params, lower, upper })
    }

    pub fn params(&self) -> &QuadrotorParams {
        &self.params
    }

    pub fn hover_thrust(&self) -> f64 {
        self.params.mass * self.params.gravity
    }

    fn check_chart(&self, x: &[f64]) -> Result<()> {
        if x[7].abs() > self.params.pitch_limit {
            return Err(Error::Argument(format!(
                "pitch {:.3} rad outside the Euler-angle chart",
                x[7]
            )));
        }
        Ok(())
    }
}

impl ControlAffine for Quadrotor {
    fn name(&self) -> &str {
        "quadrotor"
    }

    fn state_dim(&self) -> usize {
        12
    }

    fn control_dim(&self) -> usize {
        4
    }

    fn input_lower(&self) -> &[f64] {
        &self.lower
    }

    fn input_upper(&self) -> &[f64] {
        &self.upper
    }

    fn position_indices(&self) -> &[usize] {
        &[0, 1, 2]
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_chart(x)?;
        let [jx, jy, jz] = self.params.inertia;
        let (phi, theta) = (x[6], x[7]);
        let (p, q, r) = (x[9], x[10], x[11]);
        let (sphi, cphi) = phi.sin_cos();
        let (ttheta, ctheta) = (theta.tan(), theta.cos());
        out[0] = x[3];
        out[1] = x[4];
        out[2] = x[5];
        out[3] = 0.0;
        out[4] = 0.0;
        out[5] = -self.params.gravity;
        out[6] = p + (sphi * q + cphi * r) * ttheta;
        out[7] = cphi * q - sphi * r;
        out[8] = (sphi * q + cphi * r) / ctheta;
        // ω̇ = J⁻¹(−ω × Jω)
        out[9] = (jy - jz) * q * r / jx;
        out[10] = (jz - jx) * p * r / jy;
        out[11] = (jx - jy) * p * q / jz;
        Ok(())
    }

    fn actuation(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_chart(x)?;
        out.fill(0.0);
        let m = self.params.mass;
        let (sphi, cphi) = x[6].sin_cos();
        let (sth, cth) = x[7].sin_cos();
        let (spsi, cpsi) = x[8].sin_cos();
        // third column of R = Rz(ψ)·Ry(θ)·Rx(φ)
        let col = [
            cpsi * sth * cphi + spsi * sphi,
            spsi * sth * cphi - cpsi * sphi,
            cth * cphi,
        ];
        for (i, c) in col.iter().enumerate() {
            out[(3 + i) * 4] = c / m;
        }
        for i in 0..3 {
            out[(9 + i) * 4 + 1 + i] = 1.0 / self.params.inertia[i];
        }
        Ok(())
    }
}
