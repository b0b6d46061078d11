use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSnapshot, PerceptionSchedule};
use crate::dynamics::ControlAffine;
use crate::error::Result;
use crate::filter::{filter_step, FilterParams};
use crate::policies::PolicyLibrary;
use crate::rollout::{rollout_value, RolloutParams, RolloutResult, Workers};

/// Latency summary in seconds; all fields are `None` for an empty sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub n: usize,
    pub median: Option<f64>,
    pub p95: Option<f64>,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return TimingStats { n: 0, median: None, p95: None, mean: None, min: None, max: None };
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| s[((p * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
        TimingStats {
            n: s.len(),
            median: Some(q(0.5)),
            p95: Some(q(0.95)),
            mean: Some(s.iter().sum::<f64>() / s.len() as f64),
            min: Some(s[0]),
            max: Some(s[s.len() - 1]),
        }
    }
}

/// Every library policy from every state, flattened over (state, policy)
/// pairs so a pool can spread the work; results come back grouped by state.
pub fn evaluate_batch(
    model: &dyn ControlAffine,
    library: &PolicyLibrary,
    snapshot: &ConstraintSnapshot,
    states: &[Vec<f64>],
    t: f64,
    params: &RolloutParams,
    workers: &Workers,
) -> Result<Vec<Vec<RolloutResult>>> {
    let m = library.len();
    let pairs: Vec<(usize, usize)> = (0..states.len()).flat_map(|i| (0..m).map(move |k| (i, k))).collect();
    let flat = workers.map(&pairs, |&(i, k)| {
        rollout_value(model, &library.policies()[k], snapshot, &states[i], t, params, false)
    });
    let mut out: Vec<Vec<RolloutResult>> = Vec::with_capacity(states.len());
    for (n, r) in flat.into_iter().enumerate() {
        if n % m == 0 {
            out.push(Vec::with_capacity(m));
        }
        out.last_mut().expect("pushed above").push(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub workers: usize,
    pub batch: usize,
    pub sequential: f64,
    pub parallel: f64,
    pub speedup: f64,
    /// Parallel results equal the sequential ones bit for bit.
    pub bitwise_equal: bool,
}

/// Best-of-`repeats` wall time of a batch evaluation, sequential against a
/// pool of `n_workers`.
pub fn parallel_speedup(
    model: &dyn ControlAffine,
    library: &PolicyLibrary,
    snapshot: &ConstraintSnapshot,
    states: &[Vec<f64>],
    params: &RolloutParams,
    n_workers: usize,
    repeats: usize,
) -> Result<SpeedupReport> {
    let seq = Workers::sequential();
    let par = Workers::new(n_workers)?;
    let time = |w: &Workers| -> Result<(f64, Vec<Vec<RolloutResult>>)> {
        let mut best = f64::INFINITY;
        let mut last = Vec::new();
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            last = evaluate_batch(model, library, snapshot, states, snapshot.t, params, w)?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        Ok((best, last))
    };
    let (sequential, a) = time(&seq)?;
    let (parallel, b) = time(&par)?;
    let bitwise_equal = a.len() == b.len()
        && a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| {
            x.value.to_bits() == y.value.to_bits() && x.safe == y.safe && x.policy_id == y.policy_id
        });
    Ok(SpeedupReport {
        workers: par.count(),
        batch: states.len(),
        sequential,
        parallel,
        speedup: sequential / parallel,
        bitwise_equal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub filter_step: TimingStats,
    /// Library evaluation alone, the rollout share of a filter step.
    pub rollouts: TimingStats,
    pub speedup: Option<SpeedupReport>,
}

/// Times `n_steps` filter steps cycling through `states` (after `warmup`
/// untimed steps).
#[allow(clippy::too_many_arguments)]
pub fn benchmark_timing(
    model: &dyn ControlAffine,
    library: &PolicyLibrary,
    schedule: &PerceptionSchedule,
    filter: &FilterParams,
    states: &[Vec<f64>],
    n_steps: usize,
    warmup: usize,
    workers: &Workers,
) -> Result<BenchReport> {
    let mut steps = Vec::with_capacity(n_steps);
    let mut rollouts = Vec::with_capacity(n_steps);
    if !states.is_empty() {
        let t = schedule.snapshots()[0].t;
        let snapshot = &schedule.snapshots()[0];
        for k in 0..warmup + n_steps {
            let x = &states[k % states.len()];
            let start = Instant::now();
            filter_step(model, x, t, library, schedule, filter, workers)?;
            let step = start.elapsed().as_secs_f64();
            let start = Instant::now();
            crate::rollout::evaluate_library(model, library, snapshot, x, t, &filter.rollout, workers, false)?;
            let roll = start.elapsed().as_secs_f64();
            if k >= warmup {
                steps.push(step);
                rollouts.push(roll);
            }
        }
    }
    Ok(BenchReport {
        filter_step: TimingStats::from_samples(&steps),
        rollouts: TimingStats::from_samples(&rollouts),
        speedup: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stats() {
        let s = TimingStats::from_samples(&[]);
        assert_eq!(s.n, 0);
        assert!(s.median.is_none() && s.p95.is_none());
    }

    #[test]
    fn order_statistics() {
        let v: Vec<f64> = (1..=101).rev().map(f64::from).collect();
        let s = TimingStats::from_samples(&v);
        assert_eq!(s.median, Some(51.0));
        assert_eq!(s.p95, Some(96.0));
        assert_eq!(s.min, Some(1.0));
    }
}
