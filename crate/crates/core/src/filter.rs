//! The policy-library safety filter step: snapshot lookup, library
//! rollouts, least-invasive mode selection, and a minimally modifying QP on
//! the selected mode's finite-horizon value.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constraints::{Combiner, ConstraintSnapshot, PerceptionSchedule};
use crate::dynamics::{flow, ControlAffine, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::policies::{Policy, PolicyLibrary};
use crate::qp::{qp_min_norm, Row};
use crate::rollout::{evaluate_library, rollout_value, select_mode, RolloutParams, RolloutResult, Workers};

/// Shape of the barrier constraint in the QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BarrierForm {
    /// One row per near-active piece of `H`: each local-in-time minimum of
    /// each primitive's margin along the rollout.
    #[default]
    Pieces,
    /// A single row on `∇H`.
    Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    pub rollout: RolloutParams,
    /// Linear class-K gain: `α(s) = alpha·s`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Central-difference step for `∇_x H` (state units).
    #[serde(default = "default_grad_eps")]
    pub grad_eps: f64,
    /// Slack penalty; `None` keeps the barrier row hard.
    #[serde(default)]
    pub relaxation_weight: Option<f64>,
    #[serde(default)]
    pub barrier: BarrierForm,
    /// Most rows kept in `pieces` form, lowest values first.
    #[serde(default = "default_max_rows")]
    pub max_rows: usize,
    /// Keep every policy's rollout trajectory, not only the selected one.
    #[serde(default)]
    pub retain_trajectories: bool,
    /// Record wall-clock time per step in decisions.
    #[serde(default)]
    pub measure_time: bool,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_grad_eps() -> f64 {
    1e-4
}

fn default_max_rows() -> usize {
    8
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            rollout: RolloutParams::default(),
            alpha: default_alpha(),
            grad_eps: default_grad_eps(),
            relaxation_weight: None,
            barrier: BarrierForm::default(),
            max_rows: default_max_rows(),
            retain_trajectories: false,
            measure_time: false,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        self.rollout.validate()?;
        if !(self.alpha > 0.0) {
            return Err(Error::Argument("class-K gain must be > 0".into()));
        }
        if !(self.grad_eps > 0.0) {
            return Err(Error::Argument("gradient step must be > 0".into()));
        }
        if self.max_rows == 0 {
            return Err(Error::Argument("max_rows must be >= 1".into()));
        }
        if let Some(w) = self.relaxation_weight {
            if !(w > 0.0) {
                return Err(Error::Argument("relaxation weight must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    /// Nominal action already satisfies the barrier condition.
    Inactive,
    Active,
    /// Solved with a positive slack on the barrier row.
    Relaxed,
    /// No usable barrier row; a library policy runs open-loop.
    FallbackEngaged,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Inactive => "inactive",
            QpStatus::Active => "active",
            QpStatus::Relaxed => "relaxed",
            QpStatus::FallbackEngaged => "fallback_engaged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    /// Least-invasive safe mode, if any library policy certified.
    pub selected_mode: Option<String>,
    pub selected_index: Option<usize>,
    /// Policy executed open-loop when `qp_status` is `fallback_engaged`.
    pub engaged: Option<String>,
    pub u_out: Vec<f64>,
    pub u_nom: Vec<f64>,
    pub qp_status: QpStatus,
    /// `H` of the selected (or engaged) policy.
    pub h_selected: f64,
    /// `h_{κ(t)}(x)` at the current state.
    pub margin: f64,
    pub snapshot_index: usize,
    pub solve_time: f64,
    pub results: Vec<RolloutResult>,
}

/// `∇_x H^π_T(x)` by central differences (`2·n` rollouts). With a zero
/// horizon `H = h`, and the snapshot's analytic gradient is returned.
pub fn value_gradient(
    model: &dyn ControlAffine,
    policy: &Policy,
    snapshot: &ConstraintSnapshot,
    x: &[f64],
    t: f64,
    params: &FilterParams,
    workers: &Workers,
) -> Result<Vec<f64>> {
    if params.rollout.horizon == 0.0 {
        return snapshot.gradient_at(x, t - snapshot.t);
    }
    let n = x.len();
    let eps = params.grad_eps;
    let probes: Vec<Vec<f64>> = (0..2 * n)
        .map(|k| {
            let mut p = x.to_vec();
            p[k / 2] += if k % 2 == 0 { eps } else { -eps };
            p
        })
        .collect();
    let values = workers
        .map(&probes, |p| {
            rollout_value(model, policy, snapshot, p, t, &params.rollout, false).map(|r| r.value)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let (plus, minus) = (values[2 * i], values[2 * i + 1]);
        grad[i] = if plus == f64::INFINITY && minus == f64::INFINITY {
            0.0
        } else if plus.is_finite() && minus.is_finite() {
            (plus - minus) / (2.0 * eps)
        } else {
            return Err(Error::NonFinite { what: "perturbed rollout value" });
        };
    }
    Ok(grad)
}

/// Affine barrier row `∇H·(f + g·u) ≥ −α·H` as `a·u ≥ b`.
pub fn barrier_row(
    model: &dyn ControlAffine,
    x: &[f64],
    grad: &[f64],
    value: f64,
    alpha: f64,
) -> Result<Row> {
    let (n, m) = (model.state_dim(), model.control_dim());
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n * m];
    model.drift(x, &mut f)?;
    model.actuation(x, &mut g)?;
    let a: Vec<f64> = (0..m).map(|j| (0..n).map(|i| grad[i] * g[i * m + j]).sum()).collect();
    let b = -alpha * value - dot(grad, &f);
    if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "barrier row" });
    }
    Ok(Row { a, b })
}

/// A smooth piece of the rollout value: one constraint component at one
/// local minimum in time, with its value and state gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuePiece {
    pub component: usize,
    pub sample: usize,
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Per-component margins along a trajectory. Under hard-min each primitive
/// is a component; under smooth-min the combined `h` is the only one.
fn component_margins(traj: &Trajectory, snapshot: &ConstraintSnapshot) -> Vec<Vec<f64>> {
    let offset = traj.t0 - snapshot.t;
    let per_sample: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, x)| match snapshot.combiner {
            Combiner::HardMin => snapshot.margins_at(x, offset + t),
            Combiner::SmoothMin { .. } => vec![snapshot.evaluate_at(x, offset + t)],
        })
        .collect();
    let k = per_sample.first().map_or(0, Vec::len);
    (0..k).map(|c| per_sample.iter().map(|m| m[c]).collect()).collect()
}

// first index of each plateau that is a local minimum, endpoints included
fn local_minima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    (0..n)
        .filter(|&i| (i == 0 || v[i] < v[i - 1]) && (i + 1 == n || v[i] <= v[i + 1]))
        .collect()
}

/// Pieces of `H^π_T` at `x`, lowest value first, gradients by central
/// differences on the same `2·n` perturbed rollouts for every piece.
pub fn value_pieces(
    model: &dyn ControlAffine,
    policy: &Policy,
    snapshot: &ConstraintSnapshot,
    x: &[f64],
    t: f64,
    params: &FilterParams,
    workers: &Workers,
) -> Result<Vec<ValuePiece>> {
    let n = x.len();
    let eps = params.grad_eps;
    let mut probes = vec![x.to_vec()];
    for k in 0..2 * n {
        let mut p = x.to_vec();
        p[k / 2] += if k % 2 == 0 { eps } else { -eps };
        probes.push(p);
    }
    let margins = workers
        .map(&probes, |p| {
            flow(model, policy, p, t, params.rollout.horizon, params.rollout.dt).map(|tr| component_margins(&tr, snapshot))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let base = &margins[0];
    let mut pieces = Vec::new();
    for (c, series) in base.iter().enumerate() {
        for i in local_minima(series) {
            if series[i] == f64::INFINITY {
                continue;
            }
            let mut grad = vec![0.0; n];
            for (j, g) in grad.iter_mut().enumerate() {
                let plus = margins[1 + 2 * j].get(c).and_then(|m| m.get(i));
                let minus = margins[2 + 2 * j].get(c).and_then(|m| m.get(i));
                match (plus, minus) {
                    (Some(p), Some(m)) if p.is_finite() && m.is_finite() => *g = (p - m) / (2.0 * eps),
                    _ => return Err(Error::NonFinite { what: "perturbed rollout margin" }),
                }
            }
            pieces.push(ValuePiece { component: c, sample: i, value: series[i], grad });
        }
    }
    pieces.sort_by(|a, b| a.value.total_cmp(&b.value));
    pieces.truncate(params.max_rows);
    Ok(pieces)
}

enum Outcome {
    Control(Vec<f64>, QpStatus),
    Fallback,
    Engage(usize),
}

fn barrier_rows(
    model: &dyn ControlAffine,
    policy: &Policy,
    snapshot: &ConstraintSnapshot,
    x: &[f64],
    t: f64,
    params: &FilterParams,
    workers: &Workers,
    value: f64,
) -> Result<Vec<Row>> {
    if params.rollout.horizon == 0.0 || params.barrier == BarrierForm::Value {
        let grad = value_gradient(model, policy, snapshot, x, t, params, workers)?;
        return Ok(vec![barrier_row(model, x, &grad, value, params.alpha)?]);
    }
    value_pieces(model, policy, snapshot, x, t, params, workers)?
        .iter()
        .map(|p| barrier_row(model, x, &p.grad, p.value, params.alpha))
        .collect()
}

fn barrier_control(
    model: &dyn ControlAffine,
    library: &PolicyLibrary,
    snapshot: &ConstraintSnapshot,
    x: &[f64],
    t: f64,
    params: &FilterParams,
    workers: &Workers,
    selected: usize,
    value: f64,
    u_nom: &[f64],
) -> Outcome {
    if value == f64::INFINITY {
        return Outcome::Control(u_nom.to_vec(), QpStatus::Inactive);
    }
    let policy = &library.policies()[selected];
    let Ok(rows) = barrier_rows(model, policy, snapshot, x, t, params, workers, value) else {
        return Outcome::Fallback;
    };
    let violated = |r: &Row| dot(&r.a, u_nom) < r.b;
    if !rows.iter().any(violated) {
        return Outcome::Control(u_nom.to_vec(), QpStatus::Inactive);
    }
    if rows.iter().any(|r| violated(r) && norm(&r.a) < 1e-9) {
        return Outcome::Engage(selected);
    }
    let rows: Vec<Row> = rows.into_iter().filter(|r| norm(&r.a) >= 1e-9).collect();
    let (lower, upper) = (model.input_lower(), model.input_upper());
    match params.relaxation_weight {
        None => match qp_min_norm(u_nom, &rows, lower, upper) {
            Ok(sol) => Outcome::Control(sol.u, QpStatus::Active),
            Err(_) => Outcome::Fallback,
        },
        Some(w) => {
            // one shared slack σ = √w·s enters as an extra unit-weight variable
            let mut u0 = u_nom.to_vec();
            u0.push(0.0);
            let rows: Vec<Row> = rows
                .into_iter()
                .map(|r| {
                    let mut a = r.a;
                    a.push(1.0 / w.sqrt());
                    Row { a, b: r.b }
                })
                .collect();
            let mut lo = lower.to_vec();
            lo.push(0.0);
            let mut hi = upper.to_vec();
            hi.push(f64::INFINITY);
            match qp_min_norm(&u0, &rows, &lo, &hi) {
                Ok(mut sol) => {
                    let slack = sol.u.pop().unwrap_or(0.0);
                    let status = if slack > 0.0 { QpStatus::Relaxed } else { QpStatus::Active };
                    Outcome::Control(sol.u, status)
                }
                Err(_) => Outcome::Fallback,
            }
        }
    }
}

/// Highest-value library policy; ties go to the lower rank.
fn best_policy(results: &[RolloutResult]) -> usize {
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.value > results[best].value {
            best = i;
        }
    }
    best
}

/// One safety-filter step at state `x` and absolute time `t`.
///
/// Numeric failures inside the step never surface as errors: they engage
/// the highest-value library policy open-loop. Errors are reserved for
/// invalid arguments (dimensions, parameters, `t` before the first update).
pub fn filter_step(
    model: &dyn ControlAffine,
    x: &[f64],
    t: f64,
    library: &PolicyLibrary,
    schedule: &PerceptionSchedule,
    params: &FilterParams,
    workers: &Workers,
) -> Result<FilterDecision> {
    let start = params.measure_time.then(Instant::now);
    params.validate()?;
    let snapshot = schedule.snapshot_at(t)?;
    if x.len() != model.state_dim() {
        return Err(Error::Dimension { what: "state", expected: model.state_dim(), got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "state" });
    }
    let margin = snapshot.evaluate_at(x, t - snapshot.t);
    let mut results = evaluate_library(model, library, snapshot, x, t, &params.rollout, workers, true)?;
    let mode = select_mode(&results, library);
    let u_nom = library.nominal().action(model, x, t);

    let outcome = match mode {
        Some(s) => barrier_control(
            model, library, snapshot, x, t, params, workers, s, results[s].value, &u_nom,
        ),
        None => Outcome::Fallback,
    };
    let (u_out, qp_status, engaged) = match outcome {
        Outcome::Control(u, status) => (u, status, None),
        Outcome::Engage(i) => (
            library.policies()[i].action(model, x, t),
            QpStatus::FallbackEngaged,
            Some(i),
        ),
        Outcome::Fallback => {
            let i = best_policy(&results);
            (library.policies()[i].action(model, x, t), QpStatus::FallbackEngaged, Some(i))
        }
    };
    let reported = engaged.or(mode);
    let h_selected = reported.map(|i| results[i].value).unwrap_or(f64::NEG_INFINITY);
    if !params.retain_trajectories {
        for (i, r) in results.iter_mut().enumerate() {
            if Some(i) != reported {
                r.trajectory = None;
            }
        }
    }
    let mut u_out = u_out;
    model.clamp_control(&mut u_out);
    Ok(FilterDecision {
        selected_mode: mode.map(|i| library.policies()[i].id().to_string()),
        selected_index: mode,
        engaged: engaged.map(|i| library.policies()[i].id().to_string()),
        u_out,
        u_nom,
        qp_status,
        h_selected,
        margin,
        snapshot_index: snapshot.index,
        solve_time: start.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0),
        results,
    })
}
