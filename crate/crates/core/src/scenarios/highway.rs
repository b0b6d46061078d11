use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::variant_library;
use super::sim::{simulate, ClosedLoop, ModelSchedule, RunLog, SimParams};
use super::{periodic_schedule, VariantRun};
use crate::constraints::Primitive;
use crate::dynamics::{Model, Vehicle, VehicleParams};
use crate::error::{Error, Result};
use crate::filter::FilterParams;
use crate::policies::PolicyLibrary;
use crate::rollout::Workers;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuChange {
    pub t: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighwaySpec {
    pub x0: Vec<f64>,
    /// Static obstacles and road edges, re-observed every perception period.
    pub obstacles: Vec<Primitive>,
    #[serde(default)]
    pub mu_schedule: Vec<MuChange>,
    pub perception_period: f64,
    pub sim: SimParams,
    /// Single-fallback baselines run next to the full library.
    #[serde(default)]
    pub baselines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayReport {
    pub runs: Vec<VariantRun>,
    /// First friction change, if any.
    pub mu_change_time: Option<f64>,
    /// First mode switch of the full-library run at or after the change.
    pub first_switch_after_change: Option<f64>,
}

/// Plant (and rollout) models with friction switched at the scheduled times.
pub fn friction_schedule(params: &VehicleParams, changes: &[MuChange]) -> Result<ModelSchedule> {
    let base = Vehicle::new(params.clone())?;
    let mut entries: Vec<(f64, Model)> = vec![(0.0, Arc::new(base.clone()))];
    for c in changes {
        if !(c.t >= 0.0) {
            return Err(Error::Config("friction change time must be >= 0".into()));
        }
        entries.push((c.t, Arc::new(base.with_mu(c.mu)?)));
    }
    ModelSchedule::new(entries)
}

pub fn first_switch_after(log: &RunLog, t: f64) -> Option<f64> {
    log.switches.iter().map(|s| s.t).find(|s| *s >= t)
}

pub fn run_highway(
    params: &VehicleParams,
    library: &PolicyLibrary,
    filter: &FilterParams,
    spec: &HighwaySpec,
    workers: &Workers,
) -> Result<HighwayReport> {
    let models = friction_schedule(params, &spec.mu_schedule)?;
    let schedule = periodic_schedule(&spec.obstacles, &[], spec.perception_period, spec.sim.duration, &[0, 1], 8)?;
    if spec.x0.len() != 8 {
        return Err(Error::Dimension { what: "highway x0", expected: 8, got: spec.x0.len() });
    }
    let mut variants = vec![super::grid::FULL_LIBRARY.to_string()];
    variants.extend(spec.baselines.iter().cloned());
    let mut runs = Vec::new();
    for v in variants {
        let lib = variant_library(library, &v)?;
        let setup = ClosedLoop { models: &models, library: &lib, schedule: &schedule, filter, sim: &spec.sim };
        let log = simulate(&setup, &spec.x0, workers, None)?;
        runs.push(VariantRun { variant: v, log });
    }
    let mu_change_time = spec.mu_schedule.iter().map(|c| c.t).reduce(f64::min);
    let first_switch_after_change = mu_change_time.and_then(|t| first_switch_after(&runs[0].log, t));
    Ok(HighwayReport { runs, mu_change_time, first_switch_after_change })
}
