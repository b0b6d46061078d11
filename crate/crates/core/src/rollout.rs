//! Finite-horizon values `H^π_T(x)` from policy rollouts, batched library
//! evaluation and least-invasive safe-mode selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSnapshot;
use crate::dynamics::{flow, ControlAffine, Trajectory};
use crate::error::{Error, Result};
use crate::policies::{Policy, PolicyLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutParams {
    /// Horizon `T` (s). `0` collapses `H` to the pointwise margin `h(x)`.
    pub horizon: f64,
    pub dt: f64,
    /// A rollout certifies safety when `H > safety_margin`.
    #[serde(default = "default_margin")]
    pub safety_margin: f64,
}

fn default_margin() -> f64 {
    0.05
}

impl Default for RolloutParams {
    fn default() -> Self {
        RolloutParams { horizon: 2.0, dt: 0.02, safety_margin: default_margin() }
    }
}

impl RolloutParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Argument("rollout horizon must be finite and >= 0".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Argument("rollout dt must be > 0".into()));
        }
        if self.horizon > 0.0 && self.dt > self.horizon + 1e-12 {
            return Err(Error::Argument("rollout dt must not exceed the horizon".into()));
        }
        if !(self.safety_margin >= 0.0) {
            return Err(Error::Argument("safety margin must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub policy_id: String,
    pub rank: u32,
    /// `H^π_T(x)`; `−∞` when the rollout blew up.
    pub value: f64,
    /// Trajectory clearance `γ`, identical to `value`.
    pub clearance: f64,
    /// Rollout time (s) at which the minimum margin occurs.
    pub min_time: f64,
    pub safe: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Sampled clearance `min_i h(σ(τ_i))` and the time of the minimum.
///
/// Obstacles are evaluated at look-ahead `t0 + τ_i − t_k`, i.e. relative to
/// the snapshot's own time.
pub fn clearance_with_time(traj: &Trajectory, snapshot: &ConstraintSnapshot) -> (f64, f64) {
    let offset = traj.t0 - snapshot.t;
    let mut best = f64::INFINITY;
    let mut at = 0.0;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let h = snapshot.evaluate_at(x, offset + t);
        if h < best {
            best = h;
            at = *t;
        }
    }
    (best, at)
}

/// `γ(σ)` over the trajectory's sample grid.
pub fn clearance(traj: &Trajectory, snapshot: &ConstraintSnapshot) -> f64 {
    clearance_with_time(traj, snapshot).0
}

/// Rolls `policy` out from `x0` (at absolute time `t0`) and scores it
/// against `snapshot`. A blow-up is reported as an unsafe result with
/// `value = −∞`, not as an error.
pub fn rollout_value(
    model: &dyn ControlAffine,
    policy: &Policy,
    snapshot: &ConstraintSnapshot,
    x0: &[f64],
    t0: f64,
    params: &RolloutParams,
    retain: bool,
) -> Result<RolloutResult> {
    params.validate()?;
    if x0.len() != model.state_dim() {
        return Err(Error::Dimension { what: "state", expected: model.state_dim(), got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "initial state" });
    }
    match flow(model, policy, x0, t0, params.horizon, params.dt) {
        Ok(traj) => {
            let (value, min_time) = clearance_with_time(&traj, snapshot);
            Ok(RolloutResult {
                policy_id: policy.id().to_string(),
                rank: policy.rank(),
                value,
                clearance: value,
                min_time,
                safe: value > params.safety_margin,
                trajectory: retain.then_some(traj),
                failure: None,
            })
        }
        Err(e @ Error::BlowUp { .. }) => Ok(RolloutResult {
            policy_id: policy.id().to_string(),
            rank: policy.rank(),
            value: f64::NEG_INFINITY,
            clearance: f64::NEG_INFINITY,
            min_time: 0.0,
            safe: false,
            trajectory: None,
            failure: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

/// Worker pool for batched rollouts. Results are always gathered in input
/// order, so output is independent of the worker count.
#[derive(Debug)]
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
    count: usize,
}

impl Workers {
    pub fn sequential() -> Self {
        Workers { pool: None, count: 1 }
    }

    pub fn new(count: usize) -> Result<Self> {
        if count <= 1 {
            return Ok(Self::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build()
            .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
        Ok(Workers { pool: Some(pool), count })
    }

    /// One worker per logical core.
    pub fn available() -> Result<Self> {
        Self::new(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match &self.pool {
            None => items.iter().map(f).collect(),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }
}

/// Evaluates every library policy from `x0`; results follow library order.
pub fn evaluate_library(
    model: &dyn ControlAffine,
    library: &PolicyLibrary,
    snapshot: &ConstraintSnapshot,
    x0: &[f64],
    t0: f64,
    params: &RolloutParams,
    workers: &Workers,
    retain: bool,
) -> Result<Vec<RolloutResult>> {
    workers
        .map(library.policies(), |p| rollout_value(model, p, snapshot, x0, t0, params, retain))
        .into_iter()
        .collect()
}

/// Index (into the library) of the safe result with the smallest rank.
pub fn select_mode(results: &[RolloutResult], library: &PolicyLibrary) -> Option<usize> {
    debug_assert_eq!(results.len(), library.len());
    results
        .iter()
        .zip(library.policies())
        .enumerate()
        .filter(|(_, (r, _))| r.safe)
        .min_by_key(|(_, (_, p))| p.rank())
        .map(|(i, _)| i)
}
