use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, FULL_LIBRARY};
use super::highway::{friction_schedule, HighwaySpec};
use super::quadrotor::QuadSpec;
use super::sim::{ModelSchedule, SimParams};
use super::viability::ViabilitySpec;
use super::{periodic_schedule, quadrotor_schedule};
use crate::constraints::{PerceptionSchedule, ScheduleSpec};
use crate::dynamics::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::filter::FilterParams;
use crate::metric::FamilySpec;
use crate::policies::{library_from_config, PolicyLibrary, PolicySpec};

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    pub library: Vec<PolicySpec>,
    #[serde(default)]
    pub filter: FilterParams,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub analysis: Option<AnalysisSpec>,
    #[serde(default)]
    pub bench: Option<BenchSpec>,
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioSpec {
    GridSweep(GridSweepSpec),
    SingleRun(SingleRunSpec),
    Highway(HighwaySpec),
    Quadrotor(QuadSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSweepSpec {
    pub schedule: ScheduleSpec,
    pub grid: GridSpec,
    pub sim: SimParams,
    /// `"plcbf"` for the full library, otherwise a fallback id.
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    #[serde(default)]
    pub viability: Option<ViabilitySpec>,
}

fn default_variants() -> Vec<String> {
    vec![FULL_LIBRARY.to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleRunSpec {
    pub schedule: ScheduleSpec,
    pub x0: Vec<f64>,
    pub sim: SimParams,
    #[serde(default)]
    pub baselines: Vec<String>,
}

/// Completeness analysis at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    pub state: Vec<f64>,
    /// Snapshot lookup time.
    #[serde(default)]
    pub t: f64,
    /// Defaults to the filter's rollout horizon and step.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    pub family: FamilySpec,
}

fn default_samples() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    /// States in the parallel-speedup batch; 0 skips the comparison.
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_parallel")]
    pub parallel_workers: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_steps() -> usize {
    200
}

fn default_warmup() -> usize {
    20
}

fn default_batch() -> usize {
    100
}

fn default_parallel() -> usize {
    4
}

fn default_repeats() -> usize {
    3
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            n_steps: default_steps(),
            warmup: default_warmup(),
            batch: default_batch(),
            parallel_workers: default_parallel(),
            repeats: default_repeats(),
        }
    }
}

/// Built model, library and perception schedule of a validated config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub model: Model,
    pub models: ModelSchedule,
    pub library: PolicyLibrary,
    pub schedule: PerceptionSchedule,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

impl ScenarioConfig {
    /// Parses JSON; serde messages carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds every component and checks cross-field consistency.
    pub fn prepare(&self) -> Result<Prepared> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let model = self.model.build()?;
        let library = library_from_config(&self.library, &self.model)?;
        self.filter.validate().map_err(|e| Error::Config(format!("filter: {e}")))?;
        let n = model.state_dim();
        let pos = model.position_indices().to_vec();
        let (schedule, models) = match &self.scenario {
            ScenarioSpec::GridSweep(g) => {
                g.grid.validate()?;
                g.sim.validate()?;
                check_len("grid sweep state", 4, n)?;
                for v in &g.variants {
                    super::grid::variant_library(&library, v)?;
                }
                (g.schedule.build(&pos, n)?, ModelSchedule::constant(model.clone()))
            }
            ScenarioSpec::SingleRun(r) => {
                r.sim.validate()?;
                check_len("x0", n, r.x0.len())?;
                for v in &r.baselines {
                    library.single_fallback(v)?;
                }
                (r.schedule.build(&pos, n)?, ModelSchedule::constant(model.clone()))
            }
            ScenarioSpec::Highway(h) => {
                let ModelSpec::Vehicle { params } = &self.model else {
                    return Err(Error::Config("highway scenario needs a vehicle model".into()));
                };
                h.sim.validate()?;
                check_len("x0", n, h.x0.len())?;
                for v in &h.baselines {
                    library.single_fallback(v)?;
                }
                let s = periodic_schedule(&h.obstacles, &[], h.perception_period, h.sim.duration, &pos, n)?;
                (s, friction_schedule(params, &h.mu_schedule)?)
            }
            ScenarioSpec::Quadrotor(q) => {
                if !matches!(self.model, ModelSpec::Quadrotor { .. }) {
                    return Err(Error::Config("quadrotor scenario needs a quadrotor model".into()));
                }
                q.sim.validate()?;
                for v in &q.baselines {
                    library.single_fallback(v)?;
                }
                (quadrotor_schedule(q, self.seed)?, ModelSchedule::constant(model.clone()))
            }
        };
        if let Some(a) = &self.analysis {
            check_len("analysis state", n, a.state.len())?;
            if !(a.n_samples > 0) {
                return Err(Error::Config("analysis n_samples must be > 0".into()));
            }
        }
        Ok(Prepared { model, models, library, schedule })
    }

    /// Representative states for benchmarking.
    pub fn bench_states(&self) -> Vec<Vec<f64>> {
        match &self.scenario {
            ScenarioSpec::GridSweep(g) => g.grid.cells().into_iter().map(|(i, j)| g.grid.initial_state(i, j)).collect(),
            ScenarioSpec::SingleRun(r) => vec![r.x0.clone()],
            ScenarioSpec::Highway(h) => vec![h.x0.clone()],
            ScenarioSpec::Quadrotor(q) => vec![q.initial_state()],
        }
    }
}
