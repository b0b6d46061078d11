use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constraints::PerceptionSchedule;
use crate::dynamics::{step_rk4, ControlAffine, Model};
use crate::error::{Error, Result};
use crate::filter::{filter_step, FilterParams, QpStatus};
use crate::policies::PolicyLibrary;
use crate::rollout::{RolloutResult, Workers};

/// Closed-loop timing. The filter runs every `control_period` and its output
/// is held over `substeps` RK4 steps of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub duration: f64,
    pub control_period: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Margins down to `−violation_tolerance` still count as safe.
    #[serde(default = "default_tolerance")]
    pub violation_tolerance: f64,
}

fn default_substeps() -> usize {
    1
}

fn default_tolerance() -> f64 {
    1e-3
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0) || !(self.control_period > 0.0) || self.substeps == 0 {
            return Err(Error::Config(
                "sim needs duration >= 0, control_period > 0 and substeps >= 1".into(),
            ));
        }
        if !(self.violation_tolerance >= 0.0) {
            return Err(Error::Config("sim violation_tolerance must be >= 0".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.control_period + 1e-9).floor() as usize
    }
}

/// Plant model changes over time (e.g. a friction drop). Entry `i` applies
/// from its time until the next entry.
#[derive(Debug, Clone)]
pub struct ModelSchedule {
    entries: Vec<(f64, Model)>,
}

impl ModelSchedule {
    pub fn constant(model: Model) -> Self {
        ModelSchedule { entries: vec![(0.0, model)] }
    }

    pub fn new(mut entries: Vec<(f64, Model)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("model schedule is empty".into()));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(ModelSchedule { entries })
    }

    pub fn at(&self, t: f64) -> &dyn ControlAffine {
        let i = self.entries.iter().rposition(|(s, _)| *s <= t).unwrap_or(0);
        self.entries[i].1.as_ref()
    }
}

/// Everything a closed-loop run shares across initial states.
pub struct ClosedLoop<'a> {
    pub models: &'a ModelSchedule,
    pub library: &'a PolicyLibrary,
    pub schedule: &'a PerceptionSchedule,
    pub filter: &'a FilterParams,
    pub sim: &'a SimParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Selected mode, or `None` when nothing certified.
    pub mode: Option<String>,
    pub engaged: Option<String>,
    pub h_selected: f64,
    pub h_margin: f64,
    pub qp_status: QpStatus,
    pub solve_time: f64,
    pub snapshot_index: usize,
    /// Every policy's rollout, kept only when the filter retains trajectories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollouts: Option<Vec<RolloutResult>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSwitch {
    pub t: f64,
    pub from: Option<String>,
    pub to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub switches: Vec<ModeSwitch>,
    /// Smallest margin over logged steps and plant substeps.
    pub min_margin: f64,
    pub violations: usize,
    /// Some mode certified at every perception update reached by the run.
    pub certified_at_updates: bool,
    pub certified_at_start: bool,
    /// Time at which the goal test first held.
    pub completed_at: Option<f64>,
    pub failure: Option<String>,
}

impl RunLog {
    pub fn is_safe(&self) -> bool {
        self.violations == 0 && self.failure.is_none()
    }

    pub fn terminal_state(&self) -> Option<&[f64]> {
        self.rows.last().map(|r| r.x.as_slice())
    }

    /// Steps at which the executed control differs from the nominal one.
    pub fn intervention_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.qp_status != QpStatus::Inactive)
            .count()
    }

    pub fn csv_header(state_dim: usize, control_dim: usize) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..state_dim).map(|i| format!("x{i}")));
        cols.extend((0..control_dim).map(|i| format!("u{i}")));
        cols.extend(["mode", "H_selected", "h_margin", "qp_status", "solve_time"].map(String::from));
        cols.join(",")
    }

    /// CSV body with a header line; `preamble` lines are written first as
    /// `# ` comments.
    pub fn to_csv(&self, state_dim: usize, control_dim: usize, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", Self::csv_header(state_dim, control_dim));
        for r in &self.rows {
            let _ = write!(out, "{}", r.t);
            for v in r.x.iter().chain(&r.u) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(
                out,
                ",{},{},{},{},{}",
                r.mode.as_deref().unwrap_or("none"),
                r.h_selected,
                r.h_margin,
                r.qp_status.as_str(),
                r.solve_time
            );
        }
        out
    }
}

/// Runs the filtered closed loop from `x0` at `t = 0`. Plant failures end the
/// run early and are recorded in `failure`; they are not errors.
pub fn simulate(
    setup: &ClosedLoop<'_>,
    x0: &[f64],
    workers: &Workers,
    goal: Option<&(dyn Fn(&[f64]) -> bool + Sync)>,
) -> Result<RunLog> {
    setup.sim.validate()?;
    let tol = setup.sim.violation_tolerance;
    let n_steps = setup.sim.n_steps();
    let h = setup.sim.control_period / setup.sim.substeps as f64;

    let mut log = RunLog {
        rows: Vec::with_capacity(n_steps + 1),
        switches: Vec::new(),
        min_margin: f64::INFINITY,
        violations: 0,
        certified_at_updates: true,
        certified_at_start: false,
        completed_at: None,
        failure: None,
    };
    let mut x = x0.to_vec();
    let mut last_snapshot = None;
    let mut last_mode: Option<Option<String>> = None;

    for k in 0..=n_steps {
        let t = k as f64 * setup.sim.control_period;
        let model = setup.models.at(t);
        let d = match filter_step(model, &x, t, setup.library, setup.schedule, setup.filter, workers) {
            Ok(d) => d,
            Err(e) => {
                log.failure = Some(format!("filter failed at t={t}: {e}"));
                break;
            }
        };
        if last_snapshot != Some(d.snapshot_index) {
            last_snapshot = Some(d.snapshot_index);
            log.certified_at_updates &= d.selected_mode.is_some();
        }
        if k == 0 {
            log.certified_at_start = d.selected_mode.is_some();
        }
        let executed = d.engaged.clone().or_else(|| d.selected_mode.clone());
        if last_mode.as_ref() != Some(&executed) {
            if let Some(prev) = last_mode.take() {
                log.switches.push(ModeSwitch { t, from: prev, to: executed.clone() });
            }
            last_mode = Some(executed);
        }
        log.min_margin = log.min_margin.min(d.margin);
        if d.margin < -tol {
            log.violations += 1;
        }
        let u = d.u_out.clone();
        log.rows.push(LogRow {
            t,
            x: x.clone(),
            u: d.u_out,
            mode: d.selected_mode,
            engaged: d.engaged,
            h_selected: d.h_selected,
            h_margin: d.margin,
            qp_status: d.qp_status,
            solve_time: d.solve_time,
            snapshot_index: d.snapshot_index,
            rollouts: setup.filter.retain_trajectories.then_some(d.results),
        });
        if log.completed_at.is_none() && goal.is_some_and(|g| g(&x)) {
            log.completed_at = Some(t);
            break;
        }
        if k == n_steps {
            break;
        }
        for j in 0..setup.sim.substeps {
            let ts = t + j as f64 * h;
            match step_rk4(setup.models.at(ts), &x, &u, h) {
                Ok(next) => x = next,
                Err(e) => {
                    log.failure = Some(format!("plant failed at t={ts}: {e}"));
                    return Ok(log);
                }
            }
            if j + 1 < setup.sim.substeps {
                let tn = t + (j + 1) as f64 * h;
                if let Ok(s) = setup.schedule.snapshot_at(tn) {
                    let m = s.evaluate_at(&x, tn - s.t);
                    log.min_margin = log.min_margin.min(m);
                    if m < -tol {
                        log.violations += 1;
                    }
                }
            }
        }
    }
    Ok(log)
}
