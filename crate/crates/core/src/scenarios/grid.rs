use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::sim::{simulate, ClosedLoop, ModelSchedule, SimParams};
use crate::constraints::PerceptionSchedule;
use crate::error::{Error, Result};
use crate::filter::FilterParams;
use crate::policies::PolicyLibrary;
use crate::rollout::Workers;

/// Variant id for the full library; any other id names the single fallback
/// paired with the nominal policy.
pub const FULL_LIBRARY: &str = "plcbf";

/// Grid of initial positions at a fixed velocity slice (double integrator
/// state `[p_x, p_y, v_x, v_y]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "default_velocity")]
    pub velocity: [f64; 2],
}

fn default_resolution() -> f64 {
    1.0
}

fn default_velocity() -> [f64; 2] {
    [2.0, 0.0]
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) {
            return Err(Error::Config("grid resolution must be > 0".into()));
        }
        if !(self.lower[0] < self.upper[0] && self.lower[1] < self.upper[1]) {
            return Err(Error::Config("grid box is degenerate".into()));
        }
        Ok(())
    }

    /// Cells along x and y.
    pub fn shape(&self) -> (usize, usize) {
        let n = |a: f64, b: f64| (((b - a) / self.resolution) - 1e-9).ceil().max(1.0) as usize;
        (n(self.lower[0], self.upper[0]), n(self.lower[1], self.upper[1]))
    }

    /// Cell-centre initial state for cell `(i, j)`.
    pub fn initial_state(&self, i: usize, j: usize) -> Vec<f64> {
        vec![
            self.lower[0] + (i as f64 + 0.5) * self.resolution,
            self.lower[1] + (j as f64 + 0.5) * self.resolution,
            self.velocity[0],
            self.velocity[1],
        ]
    }

    /// `(i, j)` in row-major order over y, then x.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let (nx, ny) = self.shape();
        (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Safe,
    UnsafeOrInfeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub i: usize,
    pub j: usize,
    pub x0: Vec<f64>,
    /// Some library mode certified at `t = 0`.
    pub certified_t0: bool,
    pub min_margin: f64,
    pub violations: usize,
    pub terminal: Vec<f64>,
    pub interventions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMap {
    pub variant: String,
    pub spec: GridSpec,
    pub cells: Vec<(usize, usize, CellClass)>,
    pub fraction: f64,
    pub diagnostics: Vec<CellDiagnostics>,
}

impl CoverageMap {
    pub fn class_at(&self, i: usize, j: usize) -> Option<CellClass> {
        self.cells.iter().find(|c| c.0 == i && c.1 == j).map(|c| c.2)
    }

    pub fn safe_count(&self) -> usize {
        self.cells.iter().filter(|c| c.2 == CellClass::Safe).count()
    }

    /// Cells certified at `t = 0`, in grid order.
    pub fn certified_t0(&self) -> Vec<bool> {
        self.diagnostics.iter().map(|d| d.certified_t0).collect()
    }

    /// Minimal SVG: one square per cell, green safe / yellow otherwise,
    /// y pointing up.
    pub fn to_svg(&self, px: usize) -> String {
        let (nx, ny) = self.spec.shape();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#,
            nx * px,
            ny * px
        );
        for (i, j, class) in &self.cells {
            let color = match class {
                CellClass::Safe => "#2e9e44",
                CellClass::UnsafeOrInfeasible => "#e8c31c",
            };
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{px}" height="{px}" fill="{color}" stroke="white"/>"#,
                i * px,
                (ny - 1 - j) * px
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Library used by a sweep variant.
pub fn variant_library(library: &PolicyLibrary, variant: &str) -> Result<PolicyLibrary> {
    if variant == FULL_LIBRARY {
        Ok(library.clone())
    } else {
        library.single_fallback(variant)
    }
}

/// Closed-loop simulation from every cell under one filter variant. Cells
/// run concurrently; each run is sequential.
#[allow(clippy::too_many_arguments)]
pub fn run_grid_sweep(
    spec: &GridSpec,
    models: &ModelSchedule,
    library: &PolicyLibrary,
    variant: &str,
    schedule: &PerceptionSchedule,
    filter: &FilterParams,
    sim: &SimParams,
    workers: &Workers,
) -> Result<CoverageMap> {
    spec.validate()?;
    if models.at(0.0).state_dim() != 4 {
        return Err(Error::Config("grid sweep needs the planar double integrator".into()));
    }
    let lib = variant_library(library, variant)?;
    let setup = ClosedLoop { models, library: &lib, schedule, filter, sim };
    let cells = spec.cells();
    let runs = workers.map(&cells, |&(i, j)| {
        let x0 = spec.initial_state(i, j);
        simulate(&setup, &x0, &Workers::sequential(), None).map(|log| (i, j, x0, log))
    });
    let mut out = Vec::with_capacity(cells.len());
    let mut diagnostics = Vec::with_capacity(cells.len());
    for r in runs {
        let (i, j, x0, log) = r?;
        let class = if log.is_safe() { CellClass::Safe } else { CellClass::UnsafeOrInfeasible };
        out.push((i, j, class));
        diagnostics.push(CellDiagnostics {
            i,
            j,
            certified_t0: log.certified_at_start,
            min_margin: log.min_margin,
            violations: log.violations,
            terminal: log.terminal_state().map(<[f64]>::to_vec).unwrap_or_else(|| x0.clone()),
            interventions: log.intervention_count(),
            failure: log.failure,
            x0,
        });
    }
    let safe = out.iter().filter(|c| c.2 == CellClass::Safe).count();
    Ok(CoverageMap {
        variant: variant.to_string(),
        spec: spec.clone(),
        fraction: safe as f64 / out.len() as f64,
        cells: out,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = GridSpec { lower: [0.0, 0.0], upper: [20.0, 20.0], resolution: 1.0, velocity: [2.0, 0.0] };
        assert_eq!(g.shape(), (20, 20));
        assert_eq!(g.cells().len(), 400);
        assert_eq!(g.initial_state(3, 7), vec![3.5, 7.5, 2.0, 0.0]);
        assert_eq!(g.cells()[21], (1, 1));
    }

    #[test]
    fn degenerate_grid_rejected() {
        let g = GridSpec { lower: [0.0, 0.0], upper: [0.0, 20.0], resolution: 1.0, velocity: [0.0; 2] };
        assert!(g.validate().is_err());
        let g = GridSpec { resolution: 0.0, upper: [1.0, 1.0], ..g };
        assert!(g.validate().is_err());
    }
}
