use serde::{Deserialize, Serialize};

use super::ControlLaw;
use crate::dynamics::QuadrotorParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroControl;

impl ControlLaw for ZeroControl {
    fn control(&self, _x: &[f64], _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constant {
    pub values: Vec<f64>,
}

impl Constant {
    pub fn new(values: Vec<f64>) -> Self {
        Constant { values }
    }
}

impl ControlLaw for Constant {
    fn control(&self, _x: &[f64], _t: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(&self.values) {
            *o = *v;
        }
    }
}

/// Open-loop piecewise-constant input: segment `i` covers
/// `[i·segment, (i+1)·segment)`, the last segment extends to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseConstant {
    pub segment: f64,
    pub values: Vec<Vec<f64>>,
}

impl PiecewiseConstant {
    pub fn new(segment: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        PiecewiseConstant { segment, values }.validated()
    }

    pub(crate) fn validated(self) -> Result<Self> {
        if !(self.segment > 0.0) || self.values.is_empty() {
            return Err(Error::Config(
                "piecewise-constant policy needs segment > 0 and at least one value".into(),
            ));
        }
        Ok(self)
    }
}

impl ControlLaw for PiecewiseConstant {
    fn control(&self, _x: &[f64], t: f64, out: &mut [f64]) {
        let idx = ((t / self.segment).floor().max(0.0) as usize).min(self.values.len() - 1);
        for (o, v) in out.iter_mut().zip(&self.values[idx]) {
            *o = *v;
        }
    }
}

// ---------------------------------------------------------------- double integrator

/// PD goal tracking `u = k_p (goal − p) − k_d v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiGoalPd {
    pub goal: [f64; 2],
    pub kp: f64,
    pub kd: f64,
}

impl Default for DiGoalPd {
    fn default() -> Self {
        DiGoalPd { goal: [0.0, 0.0], kp: 1.0, kd: 2.0 }
    }
}

impl ControlLaw for DiGoalPd {
    fn control(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = self.kp * (self.goal[0] - x[0]) - self.kd * x[2];
        out[1] = self.kp * (self.goal[1] - x[1]) - self.kd * x[3];
    }
}

/// Full deceleration against the current velocity, `u = −K_v v` (saturating).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiStop {
    pub kv: f64,
}

impl Default for DiStop {
    fn default() -> Self {
        DiStop { kv: 10.0 }
    }
}

impl ControlLaw for DiStop {
    fn control(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = -self.kv * x[2];
        out[1] = -self.kv * x[3];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}
/// Maximal lateral acceleration in ±y; the longitudinal axis holds a fixed
/// command plus optional velocity damping.
/// Lateral evasion in ±y with a fixed longitudinal command. Without
/// `speed_ratio` the lateral input is a constant `accel`; with it the law
/// tracks `v_y = ±speed_ratio·|v_x|`, so braking also ends the swerve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiEvade {
    pub direction: Direction,
    /// Requested lateral acceleration; the input box saturates it.
    pub accel: f64,
    pub longitudinal: f64,
    /// Longitudinal velocity feedback, `u_x = longitudinal − kv·v_x`.
    pub kv: f64,
    pub speed_ratio: Option<f64>,
    pub lateral_gain: f64,
}

impl Default for DiEvade {
    fn default() -> Self {
        DiEvade {
            direction: Direction::Up,
            accel: 1e3,
            longitudinal: 0.0,
            kv: 0.0,
            speed_ratio: None,
            lateral_gain: 10.0,
        }
    }
}

impl ControlLaw for DiEvade {
    fn control(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = self.longitudinal - self.kv * x[2];
        let sign = self.direction.sign();
        out[1] = match self.speed_ratio {
            None => sign * self.accel,
            Some(c) => self.lateral_gain * (sign * c * x[2].abs() - x[3]),
        };
    }
}

// ---------------------------------------------------------------- vehicle
//
// State (p_x, p_y, ψ, v_x, v_y, r, δ, ω), control (δ_cmd, T).

fn steer_to_heading(heading: f64, x: &[f64], k_psi: f64, k_r: f64) -> f64 {
    k_psi * (heading - x[2]) - k_r * x[5]
}

/// Lane keeping plus cruise-speed tracking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleCruise {
    pub speed: f64,
    pub lane_y: f64,
    pub k_y: f64,
    pub k_psi: f64,
    pub k_r: f64,
    /// Wheel torque per m/s of speed error.
    pub k_torque: f64,
}

impl Default for VehicleCruise {
    fn default() -> Self {
        VehicleCruise { speed: 20.0, lane_y: 0.0, k_y: 0.08, k_psi: 0.5, k_r: 0.1, k_torque: 250.0 }
    }
}

impl ControlLaw for VehicleCruise {
    fn control(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let heading = (-self.k_y * (x[1] - self.lane_y)).atan();
        out[0] = steer_to_heading(heading, x, self.k_psi, self.k_r);
        out[1] = self.k_torque * (self.speed - x[3]);
    }
}

/// Straight-line braking at a target wheel slip while holding heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleBrake {
    pub slip: f64,
    pub k_omega: f64,
    pub wheel_radius: f64,
    pub heading: f64,
    pub k_psi: f64,
    pub k_r: f64,
}

impl Default for VehicleBrake {
    fn default() -> Self {
        VehicleBrake { slip: 0.2, k_omega: 400.0, wheel_radius: 0.3, heading: 0.0, k_psi: 0.5, k_r: 0.1 }
    }
}

impl ControlLaw for VehicleBrake {
    fn control(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = steer_to_heading(self.heading, x, self.k_psi, self.k_r);
        let omega_ref = x[3].max(0.0) * (1.0 - self.slip) / self.wheel_radius;
        out[1] = self.k_omega * (omega_ref - x[7]);
    }
}

/// Lane change toward `target_y` on course-angle feedback, coasting
/// longitudinally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleLaneChange {
    pub target_y: f64,
    pub k_y: f64,
    pub max_heading: f64,
    pub k_psi: f64,
    pub k_r: f64,
    /// Steering command limit (rad), below the model's own.
    pub max_steer: f64,
}

impl Default for VehicleLaneChange {
    fn default() -> Self {
        VehicleLaneChange { target_y: 3.5, k_y: 0.05, max_heading: 0.06, k_psi: 0.8, k_r: 0.3, max_steer: 0.03 }
    }
}

impl ControlLaw for VehicleLaneChange {
    fn control(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let course = (self.k_y * (self.target_y - x[1]))
            .atan()
            .clamp(-self.max_heading, self.max_heading);
        // track the course angle ψ + β so sideslip does not cause overshoot
        let beta = x[4].atan2(x[3].abs().max(1.0));
        out[0] = steer_to_heading(course - beta, x, self.k_psi, self.k_r).clamp(-self.max_steer, self.max_steer);
        out[1] = 0.0;
    }
}

// ---------------------------------------------------------------- quadrotor
//
// State (p, v, φ θ ψ, p q r), control (thrust, τx, τy, τz).

/// Acceleration-command tracker shared by the quadrotor laws: maps a desired
/// world acceleration to thrust plus attitude-PD torques (yaw held at 0).
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeTracker {
    mass: f64,
    gravity: f64,
    inertia: [f64; 3],
    k_att: f64,
    k_rate: f64,
    max_tilt: f64,
}

impl Default for AttitudeTracker {
    fn default() -> Self {
        AttitudeTracker::new(&QuadrotorParams::default())
    }
}

impl AttitudeTracker {
    pub fn new(p: &QuadrotorParams) -> Self {
        AttitudeTracker {
            mass: p.mass,
            gravity: p.gravity,
            inertia: p.inertia,
            k_att: 49.0,
            k_rate: 14.0,
            max_tilt: 0.5,
        }
    }

    fn track(&self, x: &[f64], accel: [f64; 3], out: &mut [f64]) {
        let az = (accel[2] + self.gravity).max(0.1 * self.gravity);
        let (spsi, cpsi) = x[8].sin_cos();
        let ax = cpsi * accel[0] + spsi * accel[1];
        let ay = -spsi * accel[0] + cpsi * accel[1];
        let pitch = ax.atan2(az).clamp(-self.max_tilt, self.max_tilt);
        let roll = (-ay).atan2((ax * ax + az * az).sqrt()).clamp(-self.max_tilt, self.max_tilt);
        let tilt = (x[6].cos() * x[7].cos()).max(0.5);
        out[0] = self.mass * az / tilt;
        let yaw_err = (-x[8]).sin().atan2((-x[8]).cos());
        let errs = [roll - x[6], pitch - x[7], yaw_err];
        for i in 0..3 {
            out[1 + i] = self.inertia[i] * (self.k_att * errs[i] - self.k_rate * x[9 + i]);
        }
    }
}

fn clamp_norm(mut a: [f64; 3], max: f64) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    if n > max {
        for v in &mut a {
            *v *= max / n;
        }
    }
    a
}

/// Waypoint PD with hover-thrust feedforward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadWaypoint {
    pub goal: [f64; 3],
    pub kp: f64,
    pub kd: f64,
    pub max_accel: f64,
    #[serde(skip)]
    tracker: AttitudeTracker,
}

impl Default for QuadWaypoint {
    fn default() -> Self {
        QuadWaypoint {
            goal: [0.0, 0.0, 2.0],
            kp: 1.0,
            kd: 1.8,
            max_accel: 4.0,
            tracker: AttitudeTracker::default(),
        }
    }
}

impl QuadWaypoint {
    pub fn bind(self, params: &QuadrotorParams) -> Self {
        QuadWaypoint { tracker: AttitudeTracker::new(params), ..self }
    }
}

impl ControlLaw for QuadWaypoint {
    fn control(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let a = std::array::from_fn(|i| self.kp * (self.goal[i] - x[i]) - self.kd * x[3 + i]);
        self.tracker.track(x, clamp_norm(a, self.max_accel), out);
    }
}

/// Brake to hover: `a = −k_v v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadBrake {
    pub kv: f64,
    pub max_accel: f64,
    #[serde(skip)]
    tracker: AttitudeTracker,
}

impl Default for QuadBrake {
    fn default() -> Self {
        QuadBrake { kv: 2.0, max_accel: 6.0, tracker: AttitudeTracker::default() }
    }
}

impl QuadBrake {
    pub fn bind(self, params: &QuadrotorParams) -> Self {
        QuadBrake { tracker: AttitudeTracker::new(params), ..self }
    }
}

impl ControlLaw for QuadBrake {
    fn control(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let a = std::array::from_fn(|i| -self.kv * x[3 + i]);
        self.tracker.track(x, clamp_norm(a, self.max_accel), out);
    }
}

/// Constant acceleration along `direction` (climb or lateral dodge) with
/// velocity damping across it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadEvade {
    pub direction: [f64; 3],
    pub accel: f64,
    pub kv: f64,
    #[serde(skip)]
    tracker: AttitudeTracker,
}

impl Default for QuadEvade {
    fn default() -> Self {
        QuadEvade { direction: [0.0, 0.0, 1.0], accel: 4.0, kv: 2.0, tracker: AttitudeTracker::default() }
    }
}

impl QuadEvade {
    pub fn bind(self, params: &QuadrotorParams) -> Self {
        QuadEvade { tracker: AttitudeTracker::new(params), ..self }
    }
}

impl ControlLaw for QuadEvade {
    fn control(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let d = clamp_norm(self.direction, 1.0);
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-12);
        let d = d.map(|v| v / n);
        let v = [x[3], x[4], x[5]];
        let along = v[0] * d[0] + v[1] * d[1] + v[2] * d[2];
        let a = std::array::from_fn(|i| self.accel * d[i] - self.kv * (v[i] - along * d[i]));
        self.tracker.track(x, a, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{derivative, ControlAffine, Quadrotor};
    use crate::policies::Policy;

    #[test]
    fn piecewise_constant_segments() {
        let p = PiecewiseConstant::new(0.5, vec![vec![1.0], vec![2.0]]).unwrap();
        let mut u = [0.0];
        p.control(&[], 0.49, &mut u);
        assert_eq!(u, [1.0]);
        p.control(&[], 0.5, &mut u);
        assert_eq!(u, [2.0]);
        p.control(&[], 7.0, &mut u);
        assert_eq!(u, [2.0]);
        assert!(PiecewiseConstant::new(0.0, vec![vec![1.0]]).is_err());
    }

    #[test]
    fn waypoint_at_goal_hovers() {
        let q = Quadrotor::new(QuadrotorParams::default()).unwrap();
        let law = QuadWaypoint { goal: [1.0, 2.0, 3.0], ..Default::default() };
        let p = Policy::new("nom", 0, law);
        let mut x = [0.0; 12];
        x[..3].copy_from_slice(&[1.0, 2.0, 3.0]);
        let u = p.action(&q, &x, 0.0);
        assert!((u[0] - q.hover_thrust()).abs() < 1e-12);
        let d = derivative(&q, &x, &u).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(q.control_dim(), u.len());
    }

    #[test]
    fn evade_pushes_along_direction() {
        let q = Quadrotor::new(QuadrotorParams::default()).unwrap();
        let p = Policy::new("climb", 2, QuadEvade::default());
        let u = p.action(&q, &[0.0; 12], 0.0);
        assert!(u[0] > q.hover_thrust());
    }

    #[test]
    fn tracking_evade_is_quiet_at_rest() {
        let law = DiEvade { direction: Direction::Up, kv: 2.0, speed_ratio: Some(1.0), ..Default::default() };
        let mut u = [0.0; 2];
        law.control(&[0.0, 0.0, 0.0, 0.0], 0.0, &mut u);
        assert_eq!(u, [0.0, 0.0]);
        law.control(&[0.0, 0.0, -2.0, 0.5], 0.0, &mut u);
        assert_eq!(u, [4.0, 10.0 * (2.0 - 0.5)]);
    }

    #[test]
    fn lane_change_steering_is_clamped() {
        let law = VehicleLaneChange { target_y: 100.0, ..Default::default() };
        let mut u = [0.0; 2];
        law.control(&[0.0, 0.0, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0], 0.0, &mut u);
        assert_eq!(u[0], law.max_steer);
        let settled = VehicleLaneChange::default();
        settled.control(&[0.0, 3.5, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0], 0.0, &mut u);
        assert_eq!(u, [0.0, 0.0]);
    }
}
