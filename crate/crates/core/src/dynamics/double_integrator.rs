use super::{check_bounds, ControlAffine};
use crate::error::Result;

/// Planar double integrator, state `(p_x, p_y, v_x, v_y)`, control `(a_x, a_y)`.
#[derive(Debug, Clone)]
pub struct DoubleIntegrator {
    lower: [f64; 2],
    upper: [f64; 2],
}

impl DoubleIntegrator {
    /// Symmetric acceleration box `|a_i| ≤ u_max`.
    pub fn new(u_max: f64) -> Result<Self> {
        Self::with_bounds([-u_max, -u_max], [u_max, u_max])
    }

    pub fn with_bounds(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        check_bounds(&lower, &upper)?;
        Ok(DoubleIntegrator { lower, upper })
    }
}

impl ControlAffine for DoubleIntegrator {
    fn name(&self) -> &str {
        "double_integrator"
    }

    fn state_dim(&self) -> usize {
        4
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
        out.copy_from_slice(&[x[2], x[3], 0.0, 0.0]);
        Ok(())
    }

    fn actuation(&self, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        Ok(())
    }
}
