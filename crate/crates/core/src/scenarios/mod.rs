//! Experiment harnesses: the double-integrator grid sweep with its viability
//! oracle, highway driving with a friction drop, quadrotor navigation among
//! moving spheres, and timing benchmarks.

mod bench;
mod config;
mod grid;
mod highway;
mod quadrotor;
mod sim;
mod viability;

use serde::{Deserialize, Serialize};

pub use bench::{benchmark_timing, evaluate_batch, parallel_speedup, BenchReport, SpeedupReport, TimingStats};
pub use config::{
    AnalysisSpec, BenchSpec, GridSweepSpec, Prepared, ScenarioConfig, ScenarioSpec, SingleRunSpec, SCHEMA_VERSION,
};
pub use grid::{run_grid_sweep, variant_library, CellClass, CellDiagnostics, CoverageMap, GridSpec, FULL_LIBRARY};
pub use highway::{first_switch_after, friction_schedule, run_highway, HighwayReport, HighwaySpec, MuChange};
pub use quadrotor::{
    crossing_spheres, density_sweep, run_quadrotor, DensityReport, DensitySweep, MovingSphere, ObstacleField,
    QuadReport, QuadSpec, SweepEntry, SweepSummary,
};
pub use sim::{simulate, ClosedLoop, LogRow, ModeSwitch, ModelSchedule, RunLog, SimParams};
pub use viability::{viability_oracle, ViabilityGrid, ViabilitySpec};

use crate::constraints::{ConstraintSnapshot, PerceptionSchedule, Primitive};
use crate::error::{Error, Result};
use crate::metric::{completeness_check, AdmissibleFamily, CompletenessReport};
use crate::rollout::Workers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub variant: String,
    pub log: RunLog,
}

fn advanced(p: &Primitive, t: f64) -> Primitive {
    let shift = |c: &[f64], v: &Option<Vec<f64>>| -> Vec<f64> {
        match v {
            Some(v) => c.iter().zip(v).map(|(c, v)| c + v * t).collect(),
            None => c.to_vec(),
        }
    };
    match p {
        Primitive::Ball { center, radius, velocity } => {
            Primitive::Ball { center: shift(center, velocity), radius: *radius, velocity: velocity.clone() }
        }
        Primitive::Box { center, half_extents, velocity } => Primitive::Box {
            center: shift(center, velocity),
            half_extents: half_extents.clone(),
            velocity: velocity.clone(),
        },
        other => other.clone(),
    }
}

/// Snapshots every `period` over `[0, duration]`. `moving` primitives are
/// observed at their true constant-velocity position at each update.
pub fn periodic_schedule(
    fixed: &[Primitive],
    moving: &[Primitive],
    period: f64,
    duration: f64,
    position_indices: &[usize],
    state_dim: usize,
) -> Result<PerceptionSchedule> {
    if !(period > 0.0) {
        return Err(Error::Config("perception period must be > 0".into()));
    }
    let n = (duration / period + 1e-9).floor() as usize;
    let snaps = (0..=n)
        .map(|k| {
            let t = k as f64 * period;
            let prims = fixed.iter().cloned().chain(moving.iter().map(|p| advanced(p, t))).collect();
            ConstraintSnapshot::new(t, prims, position_indices, state_dim)
        })
        .collect::<Result<Vec<_>>>()?;
    PerceptionSchedule::new(snaps)
}

pub(crate) fn quadrotor_schedule(spec: &QuadSpec, seed: u64) -> Result<PerceptionSchedule> {
    let spheres = spec.spheres(seed);
    let moving: Vec<Primitive> = spheres
        .iter()
        .map(|s| Primitive::Ball {
            center: s.center.to_vec(),
            radius: s.radius + spec.body_radius,
            velocity: Some(s.velocity.to_vec()),
        })
        .collect();
    let fixed: Vec<Primitive> = spec
        .floor
        .map(|z| vec![Primitive::HalfSpace { normal: vec![0.0, 0.0, 1.0], offset: z }])
        .unwrap_or_default();
    periodic_schedule(&fixed, &moving, spec.perception_period, spec.sim.duration, &[0, 1, 2], 12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViabilityCell {
    pub i: usize,
    pub j: usize,
    pub oracle_viable: bool,
    pub certified_t0: bool,
    pub closed_loop_safe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViabilitySummary {
    pub nodes: usize,
    pub viable_nodes: usize,
    /// Viable-node count per sweep; never increasing.
    pub history: Vec<usize>,
    pub cells: Vec<ViabilityCell>,
    /// Oracle-viable, certified at `t = 0`, and unsafe in closed loop.
    pub counterexamples: usize,
    /// Certified at `t = 0` but outside the oracle's kernel.
    pub horizon_gap: usize,
}

/// Compares the oracle with a full-library coverage map on the map's slice.
pub fn compare_viability(grid: &ViabilityGrid, map: &CoverageMap) -> ViabilitySummary {
    let cells: Vec<ViabilityCell> = map
        .diagnostics
        .iter()
        .map(|d| ViabilityCell {
            i: d.i,
            j: d.j,
            oracle_viable: grid.query(&d.x0),
            certified_t0: d.certified_t0,
            closed_loop_safe: map.class_at(d.i, d.j) == Some(CellClass::Safe),
        })
        .collect();
    ViabilitySummary {
        nodes: grid.viable.len(),
        viable_nodes: grid.viable_count(),
        history: grid.history.clone(),
        counterexamples: cells.iter().filter(|c| c.oracle_viable && c.certified_t0 && !c.closed_loop_safe).count(),
        horizon_gap: cells.iter().filter(|c| c.certified_t0 && !c.oracle_viable).count(),
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioOutcome {
    GridSweep { maps: Vec<CoverageMap>, viability: Option<ViabilitySummary> },
    Runs { runs: Vec<VariantRun> },
    Highway(HighwayReport),
    Quadrotor { report: QuadReport, sweep: Option<DensityReport> },
}

impl ScenarioOutcome {
    /// Closed-loop runs with a log (grid sweeps keep only per-cell summaries).
    pub fn runs(&self) -> Vec<&VariantRun> {
        match self {
            ScenarioOutcome::GridSweep { .. } => Vec::new(),
            ScenarioOutcome::Runs { runs } => runs.iter().collect(),
            ScenarioOutcome::Highway(h) => h.runs.iter().collect(),
            ScenarioOutcome::Quadrotor { report, .. } => report.runs.iter().collect(),
        }
    }
}

/// Runs the configured scenario.
pub fn run_scenario(cfg: &ScenarioConfig, workers: &Workers) -> Result<ScenarioOutcome> {
    let p = cfg.prepare()?;
    match &cfg.scenario {
        ScenarioSpec::GridSweep(g) => {
            let maps = g
                .variants
                .iter()
                .map(|v| run_grid_sweep(&g.grid, &p.models, &p.library, v, &p.schedule, &cfg.filter, &g.sim, workers))
                .collect::<Result<Vec<_>>>()?;
            let viability = match &g.viability {
                None => None,
                Some(spec) => {
                    let grid = viability_oracle(p.model.as_ref(), &p.schedule.snapshots()[0], spec, workers)?;
                    maps.iter().find(|m| m.variant == FULL_LIBRARY).map(|m| compare_viability(&grid, m))
                }
            };
            Ok(ScenarioOutcome::GridSweep { maps, viability })
        }
        ScenarioSpec::SingleRun(r) => {
            let mut variants = vec![FULL_LIBRARY.to_string()];
            variants.extend(r.baselines.iter().cloned());
            let mut runs = Vec::new();
            for v in variants {
                let lib = variant_library(&p.library, &v)?;
                let setup = ClosedLoop {
                    models: &p.models,
                    library: &lib,
                    schedule: &p.schedule,
                    filter: &cfg.filter,
                    sim: &r.sim,
                };
                runs.push(VariantRun { variant: v, log: simulate(&setup, &r.x0, workers, None)? });
            }
            Ok(ScenarioOutcome::Runs { runs })
        }
        ScenarioSpec::Highway(h) => {
            let crate::dynamics::ModelSpec::Vehicle { params } = &cfg.model else {
                unreachable!("checked by prepare")
            };
            Ok(ScenarioOutcome::Highway(run_highway(params, &p.library, &cfg.filter, h, workers)?))
        }
        ScenarioSpec::Quadrotor(q) => {
            let report = run_quadrotor(&p.model, &p.library, &cfg.filter, q, cfg.seed, workers)?;
            let sweep = match &q.sweep {
                Some(s) => Some(density_sweep(&p.model, &p.library, &cfg.filter, q, s, workers)?),
                None => None,
            };
            Ok(ScenarioOutcome::Quadrotor { report, sweep })
        }
    }
}

/// Completeness check for the config's `analysis` block.
pub fn run_analysis(cfg: &ScenarioConfig, workers: &Workers) -> Result<CompletenessReport> {
    let p = cfg.prepare()?;
    let a = cfg
        .analysis
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `analysis` block".into()))?;
    let horizon = a.horizon.unwrap_or(cfg.filter.rollout.horizon);
    let dt = a.dt.unwrap_or(cfg.filter.rollout.dt);
    let family = AdmissibleFamily::from_spec(&a.family, p.model.as_ref(), &cfg.model, &p.library, horizon)?;
    let snapshot = p.schedule.snapshot_at(a.t)?;
    completeness_check(p.model.as_ref(), &p.library, &family, snapshot, &a.state, horizon, dt, a.n_samples, cfg.seed, workers)
}

/// Filter-step latency and batch speedup for the config's `bench` block.
pub fn run_bench(cfg: &ScenarioConfig, workers: &Workers) -> Result<BenchReport> {
    let p = cfg.prepare()?;
    let spec = cfg.bench.clone().unwrap_or_default();
    let states = cfg.bench_states();
    let mut report = benchmark_timing(
        p.model.as_ref(),
        &p.library,
        &p.schedule,
        &cfg.filter,
        &states,
        spec.n_steps,
        spec.warmup,
        workers,
    )?;
    if spec.batch > 0 && spec.n_steps > 0 {
        let batch: Vec<Vec<f64>> = (0..spec.batch).map(|i| states[i % states.len()].clone()).collect();
        report.speedup = Some(parallel_speedup(
            p.model.as_ref(),
            &p.library,
            &p.schedule.snapshots()[0],
            &batch,
            &cfg.filter.rollout,
            spec.parallel_workers,
            spec.repeats,
        )?);
    }
    Ok(report)
}
