use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{variant_library, FULL_LIBRARY};
use super::sim::{simulate, ClosedLoop, ModelSchedule, SimParams};
use super::{quadrotor_schedule, VariantRun};
use crate::dynamics::Model;
use crate::error::{Error, Result};
use crate::filter::FilterParams;
use crate::linalg::distance;
use crate::policies::PolicyLibrary;
use crate::rollout::Workers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingSphere {
    pub center: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleField {
    Explicit { spheres: Vec<MovingSphere> },
    /// Spheres crossing the start-goal segment, drawn from the run seed.
    Crossing {
        count: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_speed")]
        speed: f64,
    },
}

fn default_radius() -> f64 {
    0.6
}

fn default_speed() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySweep {
    pub counts: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    pub start: [f64; 3],
    pub goal: [f64; 3],
    #[serde(default = "default_tolerance")]
    pub goal_tolerance: f64,
    pub obstacles: ObstacleField,
    /// Keep `z ≥ floor`.
    #[serde(default)]
    pub floor: Option<f64>,
    /// Added to every obstacle radius.
    #[serde(default = "default_body")]
    pub body_radius: f64,
    pub perception_period: f64,
    pub sim: SimParams,
    #[serde(default)]
    pub baselines: Vec<String>,
    #[serde(default)]
    pub sweep: Option<DensitySweep>,
}

fn default_tolerance() -> f64 {
    1.0
}

fn default_body() -> f64 {
    0.3
}

impl QuadSpec {
    pub fn spheres(&self, seed: u64) -> Vec<MovingSphere> {
        match &self.obstacles {
            ObstacleField::Explicit { spheres } => spheres.clone(),
            ObstacleField::Crossing { count, radius, speed } => {
                crossing_spheres(self.start, self.goal, *count, *radius, *speed, seed)
            }
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let mut x = vec![0.0; 12];
        x[..3].copy_from_slice(&self.start);
        x
    }

    pub fn with_count(&self, count: usize) -> QuadSpec {
        let mut s = self.clone();
        let (radius, speed) = match &self.obstacles {
            ObstacleField::Crossing { radius, speed, .. } => (*radius, *speed),
            ObstacleField::Explicit { .. } => (default_radius(), default_speed()),
        };
        s.obstacles = ObstacleField::Crossing { count, radius, speed };
        s
    }
}

/// Spheres that start beside the start-goal segment and cross it
/// perpendicularly in the horizontal plane.
pub fn crossing_spheres(
    start: [f64; 3],
    goal: [f64; 3],
    count: usize,
    radius: f64,
    speed: f64,
    seed: u64,
) -> Vec<MovingSphere> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = [goal[0] - start[0], goal[1] - start[1]];
    let len = d[0].hypot(d[1]).max(1e-9);
    let lateral = [-d[1] / len, d[0] / len];
    (0..count)
        .map(|_| {
            let s: f64 = rng.gen_range(0.25..0.85);
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let offset: f64 = rng.gen_range(2.0..6.0);
            let v: f64 = speed * rng.gen_range(0.5..1.0);
            let dz: f64 = rng.gen_range(-0.5..0.5);
            let base = [
                start[0] + s * (goal[0] - start[0]),
                start[1] + s * (goal[1] - start[1]),
                start[2] + s * (goal[2] - start[2]) + dz,
            ];
            MovingSphere {
                center: [
                    base[0] + side * offset * lateral[0],
                    base[1] + side * offset * lateral[1],
                    base[2],
                ],
                velocity: [-side * v * lateral[0], -side * v * lateral[1], 0.0],
                radius,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadReport {
    pub seed: u64,
    pub spheres: Vec<MovingSphere>,
    pub runs: Vec<VariantRun>,
}

pub fn run_quadrotor(
    model: &Model,
    library: &PolicyLibrary,
    filter: &FilterParams,
    spec: &QuadSpec,
    seed: u64,
    workers: &Workers,
) -> Result<QuadReport> {
    if model.state_dim() != 12 {
        return Err(Error::Config("quadrotor scenario needs the 12-state quadrotor model".into()));
    }
    let spheres = spec.spheres(seed);
    let schedule = quadrotor_schedule(spec, seed)?;
    let models = ModelSchedule::constant(model.clone());
    let goal = spec.goal;
    let tol = spec.goal_tolerance;
    let reached = move |x: &[f64]| distance(&x[..3], &goal) <= tol;
    let mut variants = vec![FULL_LIBRARY.to_string()];
    variants.extend(spec.baselines.iter().cloned());
    let mut runs = Vec::new();
    for v in variants {
        let lib = variant_library(library, &v)?;
        let setup = ClosedLoop { models: &models, library: &lib, schedule: &schedule, filter, sim: &spec.sim };
        let log = simulate(&setup, &spec.initial_state(), workers, Some(&reached))?;
        runs.push(VariantRun { variant: v, log });
    }
    Ok(QuadReport { seed, spheres, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub count: usize,
    pub seed: u64,
    pub variant: String,
    pub completed: bool,
    pub safe: bool,
    pub certified_at_updates: bool,
    pub completed_at: Option<f64>,
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub count: usize,
    pub variant: String,
    /// Runs that reached the goal without a violation.
    pub completion_rate: f64,
    pub safety_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub entries: Vec<SweepEntry>,
    pub summary: Vec<SweepSummary>,
}

impl DensityReport {
    pub fn completion_rate(&self, count: usize, variant: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.count == count && s.variant == variant)
            .map(|s| s.completion_rate)
    }
}

/// Seeded comparison of the full library against the baselines for each
/// obstacle count. Runs execute concurrently, one per (count, seed).
pub fn density_sweep(
    model: &Model,
    library: &PolicyLibrary,
    filter: &FilterParams,
    spec: &QuadSpec,
    sweep: &DensitySweep,
    workers: &Workers,
) -> Result<DensityReport> {
    let jobs: Vec<(usize, u64)> = sweep
        .counts
        .iter()
        .flat_map(|c| sweep.seeds.iter().map(move |s| (*c, *s)))
        .collect();
    let reports = workers.map(&jobs, |&(count, seed)| {
        run_quadrotor(model, library, filter, &spec.with_count(count), seed, &Workers::sequential())
    });
    let mut entries = Vec::new();
    for (r, (count, seed)) in reports.into_iter().zip(&jobs) {
        for run in r?.runs {
            entries.push(SweepEntry {
                count: *count,
                seed: *seed,
                completed: run.log.completed_at.is_some() && run.log.is_safe(),
                safe: run.log.is_safe(),
                certified_at_updates: run.log.certified_at_updates,
                completed_at: run.log.completed_at,
                min_margin: run.log.min_margin,
                variant: run.variant,
            });
        }
    }
    let mut summary = Vec::new();
    for count in &sweep.counts {
        let mut variants: Vec<&str> = Vec::new();
        for e in entries.iter().filter(|e| e.count == *count) {
            if !variants.contains(&e.variant.as_str()) {
                variants.push(&e.variant);
            }
        }
        for v in variants {
            let group: Vec<&SweepEntry> = entries.iter().filter(|e| e.count == *count && e.variant == v).collect();
            let n = group.len() as f64;
            summary.push(SweepSummary {
                count: *count,
                variant: v.to_string(),
                completion_rate: group.iter().filter(|e| e.completed).count() as f64 / n,
                safety_rate: group.iter().filter(|e| e.safe).count() as f64 / n,
            });
        }
    }
    Ok(DensityReport { entries, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_spheres_reach_the_path_and_are_seeded() {
        let a = crossing_spheres([0.0, 0.0, 2.0], [20.0, 0.0, 2.0], 5, 0.5, 1.0, 9);
        assert_eq!(a, crossing_spheres([0.0, 0.0, 2.0], [20.0, 0.0, 2.0], 5, 0.5, 1.0, 9));
        for s in &a {
            // moving toward y = 0 along ±y
            assert!(s.center[1] * s.velocity[1] < 0.0);
            assert_eq!(s.velocity[0], 0.0);
            assert!(s.center[0] >= 5.0 && s.center[0] <= 17.0);
        }
    }
}
