//! Perceived safe sets `C_k = {x : h_k(x) ≥ 0}` built from perception
//! snapshots, the discrete update schedule `κ(t)`, and Lipschitz estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// One perceived constraint. Obstacle geometry lives in workspace
/// coordinates (the model's position indices); moving obstacles are
/// extrapolated at constant velocity from the snapshot time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    /// Disk (2-D) or sphere (3-D): margin `‖p − c(τ)‖ − r`.
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocity: Option<Vec<f64>>,
    },
    /// Axis-aligned box, signed distance to its surface.
    Box {
        center: Vec<f64>,
        half_extents: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocity: Option<Vec<f64>>,
    },
    /// Workspace half-space `n·p − offset ≥ 0` (road edges, floors).
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Affine function of the full state, `w·x + offset`.
    StateLinear { weights: Vec<f64>, offset: f64 },
    Constant { value: f64 },
}

impl Primitive {
    fn moved(center: &[f64], velocity: &Option<Vec<f64>>, tau: f64, out: &mut [f64]) {
        out.copy_from_slice(center);
        if let Some(v) = velocity {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += vi * tau;
            }
        }
    }

    /// Lipschitz constant with respect to the Euclidean state norm.
    fn lipschitz(&self) -> f64 {
        match self {
            Primitive::Ball { .. } | Primitive::Box { .. } => 1.0,
            Primitive::HalfSpace { normal, .. } => norm(normal),
            Primitive::StateLinear { weights, .. } => norm(weights),
            Primitive::Constant { .. } => 0.0,
        }
    }

    fn validate(&self, pos_dim: usize, state_dim: usize) -> Result<()> {
        let dim = |what: &'static str, got: usize, expected: usize| {
            if got != expected {
                Err(Error::Dimension { what, expected, got })
            } else {
                Ok(())
            }
        };
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Primitive::Ball { center, radius, velocity } => {
                dim("obstacle center", center.len(), pos_dim)?;
                if let Some(v) = velocity {
                    dim("obstacle velocity", v.len(), pos_dim)?;
                }
                if !(*radius > 0.0) || !finite(center) {
                    return Err(Error::Config("obstacle radius must be > 0".into()));
                }
            }
            Primitive::Box { center, half_extents, velocity } => {
                dim("box center", center.len(), pos_dim)?;
                dim("box half extents", half_extents.len(), pos_dim)?;
                if let Some(v) = velocity {
                    dim("box velocity", v.len(), pos_dim)?;
                }
                if half_extents.iter().any(|e| !(*e > 0.0)) {
                    return Err(Error::Config("box half extents must be > 0".into()));
                }
            }
            Primitive::HalfSpace { normal, .. } => dim("half-space normal", normal.len(), pos_dim)?,
            Primitive::StateLinear { weights, .. } => dim("state weights", weights.len(), state_dim)?,
            Primitive::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Config("constant margin must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// How per-primitive margins are combined into `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Combiner {
    #[default]
    HardMin,
    /// `−(1/k)·ln Σ exp(−k·h_i)`, a lower bound of the hard min within `ln(n)/k`.
    SmoothMin { temperature: f64 },
}

/// A perception update valid from `t` until the next update.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSnapshot {
    pub index: usize,
    pub t: f64,
    pub primitives: Vec<Primitive>,
    pub combiner: Combiner,
    pub scale: f64,
    /// Extrapolate moving obstacles within the snapshot; `false` freezes
    /// them at their observed position.
    pub predict_motion: bool,
    position_indices: Vec<usize>,
    state_dim: usize,
}

impl ConstraintSnapshot {
    pub fn new(
        t: f64,
        primitives: Vec<Primitive>,
        position_indices: &[usize],
        state_dim: usize,
    ) -> Result<Self> {
        if position_indices.iter().any(|&i| i >= state_dim) {
            return Err(Error::Argument("position index outside the state".into()));
        }
        if position_indices.is_empty() || position_indices.len() > 3 {
            return Err(Error::Argument("workspace must have 1 to 3 position coordinates".into()));
        }
        for p in &primitives {
            p.validate(position_indices.len(), state_dim)?;
        }
        Ok(ConstraintSnapshot {
            index: 0,
            t,
            primitives,
            combiner: Combiner::HardMin,
            scale: 1.0,
            predict_motion: true,
            position_indices: position_indices.to_vec(),
            state_dim,
        })
    }

    pub fn with_combiner(mut self, combiner: Combiner) -> Self {
        self.combiner = combiner;
        self
    }

    /// Multiplies `h` by a positive constant.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_prediction(mut self, predict: bool) -> Self {
        self.predict_motion = predict;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn position_indices(&self) -> &[usize] {
        &self.position_indices
    }

    fn tau(&self, tau: f64) -> f64 {
        if self.predict_motion {
            tau
        } else {
            0.0
        }
    }

    /// Margin of a single primitive (unscaled) and, when `grad` is given,
    /// its gradient with respect to the full state.
    fn primitive_margin(
        &self,
        prim: &Primitive,
        x: &[f64],
        tau: f64,
        grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        let pos_dim = self.position_indices.len();
        let mut rel = [0.0; 3];
        let mut center = [0.0; 3];
        let rel = &mut rel[..pos_dim.min(3)];
        let center = &mut center[..pos_dim.min(3)];
        let tau = self.tau(tau);
        let pos = |i: usize| x[self.position_indices[i]];
        match prim {
            Primitive::Ball { center: c, radius, velocity } => {
                Primitive::moved(c, velocity, tau, center);
                for i in 0..pos_dim {
                    rel[i] = pos(i) - center[i];
                }
                let d = norm(rel);
                if let Some(g) = grad {
                    if d == 0.0 {
                        return Err(Error::DegenerateGradient(x.to_vec()));
                    }
                    g.fill(0.0);
                    for i in 0..pos_dim {
                        g[self.position_indices[i]] = rel[i] / d;
                    }
                }
                Ok(d - radius)
            }
            Primitive::Box { center: c, half_extents, velocity } => {
                Primitive::moved(c, velocity, tau, center);
                let mut outside = [0.0; 3];
                let mut inside = f64::NEG_INFINITY;
                let mut inside_axis = 0;
                for i in 0..pos_dim {
                    rel[i] = pos(i) - center[i];
                    let q = rel[i].abs() - half_extents[i];
                    outside[i] = q.max(0.0);
                    if q > inside {
                        inside = q;
                        inside_axis = i;
                    }
                }
                let out_norm = norm(&outside[..pos_dim]);
                let sd = out_norm + inside.min(0.0);
                if let Some(g) = grad {
                    g.fill(0.0);
                    if out_norm > 0.0 {
                        for i in 0..pos_dim {
                            g[self.position_indices[i]] = outside[i] * rel[i].signum() / out_norm;
                        }
                    } else {
                        if rel[inside_axis] == 0.0 {
                            return Err(Error::DegenerateGradient(x.to_vec()));
                        }
                        g[self.position_indices[inside_axis]] = rel[inside_axis].signum();
                    }
                }
                Ok(sd)
            }
            Primitive::HalfSpace { normal, offset } => {
                let mut v = -offset;
                for (i, n) in normal.iter().enumerate() {
                    v += n * pos(i);
                }
                if let Some(g) = grad {
                    g.fill(0.0);
                    for (i, n) in normal.iter().enumerate() {
                        g[self.position_indices[i]] = *n;
                    }
                }
                Ok(v)
            }
            Primitive::StateLinear { weights, offset } => {
                if let Some(g) = grad {
                    g.copy_from_slice(weights);
                }
                Ok(dot(weights, x) + offset)
            }
            Primitive::Constant { value } => {
                if let Some(g) = grad {
                    g.fill(0.0);
                }
                Ok(*value)
            }
        }
    }

    /// `h_k(x)` with obstacles at their position at look-ahead `τ` (seconds
    /// after the snapshot time). `+∞` when the snapshot has no primitives.
    pub fn evaluate_at(&self, x: &[f64], tau: f64) -> f64 {
        let margins = self
            .primitives
            .iter()
            .map(|p| self.primitive_margin(p, x, tau, None).expect("margins without gradient are total"));
        self.scale * combine(self.combiner, margins)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_at(x, 0.0)
    }

    /// Per-primitive margins (scaled), for diagnostics and brute-force checks.
    pub fn margins_at(&self, x: &[f64], tau: f64) -> Vec<f64> {
        self.primitives
            .iter()
            .map(|p| self.scale * self.primitive_margin(p, x, tau, None).expect("total"))
            .collect()
    }

    /// Analytic gradient of `h_k`: the active primitive's gradient under
    /// hard-min, the softmin-weighted combination under smooth-min.
    pub fn gradient_at(&self, x: &[f64], tau: f64) -> Result<Vec<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::Dimension { what: "state", expected: self.state_dim, got: x.len() });
        }
        let n = self.state_dim;
        let mut out = vec![0.0; n];
        if self.primitives.is_empty() {
            return Ok(out);
        }
        let mut grads = vec![0.0; n * self.primitives.len()];
        let mut values = Vec::with_capacity(self.primitives.len());
        for (p, g) in self.primitives.iter().zip(grads.chunks_mut(n)) {
            values.push(self.primitive_margin(p, x, tau, Some(g))?);
        }
        match self.combiner {
            Combiner::HardMin => {
                let (best, _) = values
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
                out.copy_from_slice(&grads[best * n..(best + 1) * n]);
            }
            Combiner::SmoothMin { temperature } => {
                let m = values.iter().copied().fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = values.iter().map(|v| (-temperature * (v - m)).exp()).collect();
                let total: f64 = w.iter().sum();
                for (wi, g) in w.iter().zip(grads.chunks(n)) {
                    for (o, gi) in out.iter_mut().zip(g) {
                        *o += wi / total * gi;
                    }
                }
            }
        }
        for o in &mut out {
            *o *= self.scale;
        }
        Ok(out)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.gradient_at(x, 0.0)
    }

    /// Analytic Lipschitz bound: the scaled maximum over primitives (both
    /// combiners preserve the largest constant).
    pub fn analytic_lipschitz(&self) -> f64 {
        self.scale * self.primitives.iter().map(Primitive::lipschitz).fold(0.0, f64::max)
    }
}

fn combine(combiner: Combiner, margins: impl Iterator<Item = f64>) -> f64 {
    match combiner {
        Combiner::HardMin => margins.fold(f64::INFINITY, f64::min),
        Combiner::SmoothMin { temperature } => {
            let values: Vec<f64> = margins.collect();
            let m = values.iter().copied().fold(f64::INFINITY, f64::min);
            if !m.is_finite() {
                return m;
            }
            let s: f64 = values.iter().map(|v| (-temperature * (v - m)).exp()).sum();
            m - s.ln() / temperature
        }
    }
}

/// Axis-aligned region of the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        StateBox { lower, upper }
    }

    fn is_empty(&self) -> bool {
        self.lower.is_empty()
            || self.lower.len() != self.upper.len()
            || self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u))
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if l == u { *l } else { rng.gen_range(*l..=*u) })
            .collect()
    }
}

/// Largest `|h(x) − h(y)| / ‖x − y‖` over `n_pairs` random pairs in `region`.
pub fn sampled_lipschitz(
    snapshot: &ConstraintSnapshot,
    region: &StateBox,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::Argument("empty sampling region".into()));
    }
    if region.lower.len() != snapshot.state_dim {
        return Err(Error::Dimension {
            what: "region",
            expected: snapshot.state_dim,
            got: region.lower.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..n_pairs {
        let x = region.sample(&mut rng);
        let y = region.sample(&mut rng);
        let d = crate::linalg::distance(&x, &y);
        if d > 0.0 {
            let (hx, hy) = (snapshot.evaluate(&x), snapshot.evaluate(&y));
            if hx.is_finite() && hy.is_finite() {
                best = best.max((hx - hy).abs() / d);
            }
        }
    }
    Ok(best)
}

/// `max(analytic bound, sampled bound)` for `h_k` over `region`.
pub fn lipschitz_estimate(
    snapshot: &ConstraintSnapshot,
    region: &StateBox,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples < 2 {
        return Err(Error::Argument("lipschitz_estimate needs at least 2 samples".into()));
    }
    let sampled = sampled_lipschitz(snapshot, region, n_samples / 2, seed)?;
    Ok(snapshot.analytic_lipschitz().max(sampled))
}

/// Time-ordered perception updates; `κ(t) = k` with `t_k ≤ t < t_{k+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionSchedule {
    snapshots: Vec<ConstraintSnapshot>,
}

impl PerceptionSchedule {
    pub fn new(mut snapshots: Vec<ConstraintSnapshot>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Config("perception schedule is empty".into()));
        }
        if snapshots[0].t != 0.0 {
            return Err(Error::Config("first perception update must be at t = 0".into()));
        }
        if snapshots.windows(2).any(|w| !(w[0].t < w[1].t)) {
            return Err(Error::Config("perception update times must strictly increase".into()));
        }
        for (k, s) in snapshots.iter_mut().enumerate() {
            s.index = k;
        }
        Ok(PerceptionSchedule { snapshots })
    }

    pub fn single(snapshot: ConstraintSnapshot) -> Self {
        PerceptionSchedule::new(vec![ConstraintSnapshot { t: 0.0, ..snapshot }])
            .expect("a single snapshot at t = 0 is a valid schedule")
    }

    pub fn snapshots(&self) -> &[ConstraintSnapshot] {
        &self.snapshots
    }

    /// `κ(t)`.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let t0 = self.snapshots[0].t;
        if !(t >= t0) {
            return Err(Error::OutOfRange { t, t0 });
        }
        Ok(self.snapshots.partition_point(|s| s.t <= t) - 1)
    }

    pub fn snapshot_at(&self, t: f64) -> Result<&ConstraintSnapshot> {
        Ok(&self.snapshots[self.index_at(t)?])
    }
}

/// Serialized snapshot: `{t, primitives}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSpec {
    #[serde(alias = "t_k")]
    pub t: f64,
    pub primitives: Vec<Primitive>,
}

/// Serialized schedule with shared combiner and motion-prediction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub combiner: Combiner,
    #[serde(default = "default_true")]
    pub predict_motion: bool,
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub snapshots: Vec<SnapshotSpec>,
}

fn default_true() -> bool {
    true
}

fn default_scale() -> f64 {
    1.0
}

impl ScheduleSpec {
    pub fn build(&self, position_indices: &[usize], state_dim: usize) -> Result<PerceptionSchedule> {
        if !(self.scale > 0.0) {
            return Err(Error::Config("constraint scale must be > 0".into()));
        }
        let snaps = self
            .snapshots
            .iter()
            .map(|s| {
                Ok(ConstraintSnapshot::new(s.t, s.primitives.clone(), position_indices, state_dim)?
                    .with_combiner(self.combiner)
                    .with_scale(self.scale)
                    .with_prediction(self.predict_motion))
            })
            .collect::<Result<Vec<_>>>()?;
        PerceptionSchedule::new(snaps)
    }
}
