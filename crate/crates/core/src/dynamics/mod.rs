//! Control-affine models `ẋ = f(x) + g(x)·u`, a fixed-step RK4 integrator
//! and closed-loop flow evaluation under a [`Policy`].

mod double_integrator;
mod quadrotor;
mod vehicle;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use double_integrator::DoubleIntegrator;
pub use quadrotor::{Quadrotor, QuadrotorParams};
pub use vehicle::{Vehicle, VehicleParams};

use crate::error::{Error, Result};
use crate::policies::Policy;

/// A deterministic control-affine system with box input constraints.
///
/// `drift` and `actuation` must be pure functions of the state. A model may
/// reject states outside its valid chart (for example Euler-angle
/// singularities) by returning an error, which integrators report as a
/// blow-up.
pub trait ControlAffine: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn input_lower(&self) -> &[f64];
    fn input_upper(&self) -> &[f64];
    /// Indices of the workspace position coordinates inside the state.
    fn position_indices(&self) -> &[usize];

    /// Writes `f(x)` into `out` (length `state_dim`).
    fn drift(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Writes `g(x)` into `out`, row-major `state_dim × control_dim`.
    fn actuation(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Clamps `u` to the input box in place.
    fn clamp_control(&self, u: &mut [f64]) {
        for ((ui, lo), hi) in u.iter_mut().zip(self.input_lower()).zip(self.input_upper()) {
            *ui = ui.clamp(*lo, *hi);
        }
    }
}

pub type Model = Arc<dyn ControlAffine>;

/// Serializable model description used by scenario configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    DoubleIntegrator {
        #[serde(default = "default_di_u_max")]
        u_max: f64,
    },
    Vehicle {
        #[serde(default)]
        params: VehicleParams,
    },
    Quadrotor {
        #[serde(default)]
        params: QuadrotorParams,
    },
}

fn default_di_u_max() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model> {
        Ok(match self {
            ModelSpec::DoubleIntegrator { u_max } => Arc::new(DoubleIntegrator::new(*u_max)?),
            ModelSpec::Vehicle { params } => Arc::new(Vehicle::new(params.clone())?),
            ModelSpec::Quadrotor { params } => Arc::new(Quadrotor::new(params.clone())?),
        })
    }
}

pub(crate) fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(Error::Dimension {
            what: "input bounds",
            expected: lower.len(),
            got: upper.len(),
        });
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::Argument(
            "input_lower must be strictly below input_upper".into(),
        ));
    }
    Ok(())
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

/// `f(x) + g(x)·u` with dimension and finiteness checks.
pub fn derivative(model: &dyn ControlAffine, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_dim("state", model.state_dim(), x.len())?;
    check_dim("control", model.control_dim(), u.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "state" });
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "control" });
    }
    let mut scratch = Scratch::new(model);
    let mut out = vec![0.0; model.state_dim()];
    scratch.derivative(model, x, u, &mut out)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "state derivative" });
    }
    Ok(out)
}

/// Reusable buffers for RK4 stages.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    g: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(model: &dyn ControlAffine) -> Self {
        let n = model.state_dim();
        Scratch {
            g: vec![0.0; n * model.control_dim()],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn derivative(
        &mut self,
        model: &dyn ControlAffine,
        x: &[f64],
        u: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        model.drift(x, out)?;
        model.actuation(x, &mut self.g)?;
        let m = u.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.g[i * m..(i + 1) * m];
            *o += row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(())
    }

    /// One classical RK4 step of length `h`, written into `out`.
    pub(crate) fn rk4(
        &mut self,
        model: &dyn ControlAffine,
        x: &[f64],
        u: &[f64],
        h: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let n = x.len();
        let mut k = std::mem::take(&mut self.k);
        let mut tmp = std::mem::take(&mut self.tmp);
        let res = (|| {
            self.derivative(model, x, u, &mut k[0])?;
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k[0][i];
            }
            self.derivative(model, &tmp, u, &mut k[1])?;
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k[1][i];
            }
            self.derivative(model, &tmp, u, &mut k[2])?;
            for i in 0..n {
                tmp[i] = x[i] + h * k[2][i];
            }
            self.derivative(model, &tmp, u, &mut k[3])?;
            for i in 0..n {
                // (h·Σ)/6 keeps dyadic inputs exact when the true step is dyadic.
                out[i] = x[i] + h * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]) / 6.0;
            }
            Ok(())
        })();
        self.k = k;
        self.tmp = tmp;
        res
    }
}

/// Classical fourth-order Runge–Kutta step with `u` held constant over `[0, dt]`.
pub fn step_rk4(model: &dyn ControlAffine, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_dim("state", model.state_dim(), x.len())?;
    check_dim("control", model.control_dim(), u.len())?;
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::Argument(format!("step size must be finite and >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(x.to_vec());
    }
    let mut scratch = Scratch::new(model);
    let mut out = vec![0.0; x.len()];
    let blow_up = |_| Error::BlowUp { time: dt, last_state: x.to_vec() };
    scratch.rk4(model, x, u, dt, &mut out).map_err(blow_up)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { time: dt, last_state: x.to_vec() });
    }
    Ok(out)
}

/// A sampled closed-loop trajectory. `times` are relative to `t0`, the
/// absolute time of the first sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trajectories hold at least one sample")
    }

    /// Largest finite-difference state speed between consecutive samples.
    pub fn max_speed(&self) -> f64 {
        self.states
            .windows(2)
            .zip(self.times.windows(2))
            .map(|(s, t)| crate::linalg::distance(&s[0], &s[1]) / (t[1] - t[0]))
            .fold(0.0, f64::max)
    }
}

/// Relative sample times for a horizon: multiples of `dt` plus a shortened
/// final step when `dt` does not divide `horizon`.
pub fn sample_times(horizon: f64, dt: f64) -> Vec<f64> {
    sample_grid(horizon, dt).0
}

/// Sample times and the length of a shortened final step, if any.
fn sample_grid(horizon: f64, dt: f64) -> (Vec<f64>, Option<f64>) {
    let ratio = horizon / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() < 1e-9 {
        let n = rounded as usize;
        let mut times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        if n > 0 {
            times[n] = horizon;
        }
        (times, None)
    } else {
        let n = ratio.floor() as usize;
        let mut times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let last = horizon - n as f64 * dt;
        times.push(horizon);
        (times, Some(last))
    }
}

/// Closed-loop flow `φ^π_τ(x0)` sampled on `sample_times(horizon, dt)`.
///
/// The policy sees absolute time `t0 + τ`; its output is clamped to the
/// input box and held over each step.
pub fn flow(
    model: &dyn ControlAffine,
    policy: &Policy,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_dim("state", model.state_dim(), x0.len())?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Argument(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Argument(format!("dt must be finite and > 0, got {dt}")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "initial state" });
    }
    let (times, partial) = sample_grid(horizon, dt);
    let mut states = Vec::with_capacity(times.len());
    states.push(x0.to_vec());
    let mut scratch = Scratch::new(model);
    let mut u = vec![0.0; model.control_dim()];
    for i in 1..times.len() {
        let prev = &states[i - 1];
        let h = match partial {
            Some(last) if i == times.len() - 1 => last,
            _ => dt,
        };
        policy.action_into(model, prev, t0 + times[i - 1], &mut u);
        let mut next = vec![0.0; x0.len()];
        let failed = scratch.rk4(model, prev, &u, h, &mut next).is_err()
            || next.iter().any(|v| !v.is_finite());
        if failed {
            return Err(Error::BlowUp { time: times[i], last_state: prev.clone() });
        }
        states.push(next);
    }
    Ok(Trajectory { t0, dt, times, states })
}
