//! Coarse dynamic-programming surrogate of the viability kernel for the
//! planar double integrator. Approximate by construction: the constraint is
//! only checked at grid nodes and successors are interpolated.

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSnapshot;
use crate::dynamics::{step_rk4, ControlAffine};
use crate::error::{Error, Result};
use crate::rollout::Workers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViabilitySpec {
    /// Nodes per axis (4 axes).
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    pub position_lower: [f64; 2],
    pub position_upper: [f64; 2],
    pub velocity_lower: [f64; 2],
    pub velocity_upper: [f64; 2],
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Input levels per control axis, evenly spread over the input box.
    #[serde(default = "default_levels")]
    pub input_levels: usize,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
}

fn default_nodes() -> usize {
    21
}

fn default_dt() -> f64 {
    0.5
}

fn default_levels() -> usize {
    3
}

fn default_iter() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViabilityGrid {
    /// Node coordinates per axis: `p_x, p_y, v_x, v_y`.
    pub axes: Vec<Vec<f64>>,
    pub viable: Vec<bool>,
    /// Viable-node count after each sweep, starting with the constraint set.
    pub history: Vec<usize>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect()
}

impl ViabilityGrid {
    fn strides(&self) -> [usize; 4] {
        let n: Vec<usize> = self.axes.iter().map(Vec::len).collect();
        [n[1] * n[2] * n[3], n[2] * n[3], n[3], 1]
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let s = self.strides();
        (0..4).map(|a| self.axes[a][(idx / s[a]) % self.axes[a].len()]).collect()
    }

    /// Multilinear interpolation of the viable flag; `None` outside the grid.
    pub fn interpolate(&self, flags: &[bool], x: &[f64]) -> Option<f64> {
        let s = self.strides();
        let mut base = 0;
        let mut frac = [0.0; 4];
        for a in 0..4 {
            let ax = &self.axes[a];
            let (lo, hi) = (ax[0], ax[ax.len() - 1]);
            let tol = 1e-9 * (hi - lo);
            if !(x[a] >= lo - tol && x[a] <= hi + tol) {
                return None;
            }
            let step = (hi - lo) / (ax.len() - 1) as f64;
            let r = ((x[a] - lo) / step).clamp(0.0, (ax.len() - 1) as f64);
            let i = (r.floor() as usize).min(ax.len() - 2);
            frac[a] = r - i as f64;
            base += i * s[a];
        }
        let mut v = 0.0;
        for corner in 0..16usize {
            let mut w = 1.0;
            let mut idx = base;
            for a in 0..4 {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    idx += s[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 && flags[idx] {
                v += w;
            }
        }
        Some(v)
    }

    /// Viable iff the interpolated flag is at least one half.
    pub fn query(&self, x: &[f64]) -> bool {
        self.interpolate(&self.viable, x).is_some_and(|v| v >= 0.5)
    }

    pub fn viable_count(&self) -> usize {
        self.viable.iter().filter(|v| **v).count()
    }
}

/// Jacobi fixed-point iteration of the discrete viability operator.
pub fn viability_oracle(
    model: &dyn ControlAffine,
    snapshot: &ConstraintSnapshot,
    spec: &ViabilitySpec,
    workers: &Workers,
) -> Result<ViabilityGrid> {
    if model.state_dim() != 4 || model.control_dim() != 2 {
        return Err(Error::Config("viability oracle needs the planar double integrator".into()));
    }
    if spec.nodes < 2 || spec.input_levels == 0 || !(spec.dt > 0.0) {
        return Err(Error::Config("viability grid needs >= 2 nodes, >= 1 input level, dt > 0".into()));
    }
    let axes = vec![
        linspace(spec.position_lower[0], spec.position_upper[0], spec.nodes),
        linspace(spec.position_lower[1], spec.position_upper[1], spec.nodes),
        linspace(spec.velocity_lower[0], spec.velocity_upper[0], spec.nodes),
        linspace(spec.velocity_lower[1], spec.velocity_upper[1], spec.nodes),
    ];
    let (lo, hi) = (model.input_lower(), model.input_upper());
    let levels = |a: usize| {
        if spec.input_levels == 1 {
            vec![0.5 * (lo[a] + hi[a])]
        } else {
            linspace(lo[a], hi[a], spec.input_levels)
        }
    };
    let inputs: Vec<[f64; 2]> = levels(0)
        .into_iter()
        .flat_map(|a| levels(1).into_iter().map(move |b| [a, b]))
        .collect();

    let total = spec.nodes.pow(4);
    let mut grid = ViabilityGrid { axes, viable: Vec::new(), history: Vec::new() };
    let ids: Vec<usize> = (0..total).collect();
    grid.viable = workers.map(&ids, |&i| snapshot.evaluate(&grid.node(i)) >= 0.0);
    // successors are fixed across sweeps; a failed step is stored as NaN and
    // never counts as viable
    let k = inputs.len();
    let succ: Vec<[f64; 4]> = workers
        .map(&ids, |&i| {
            let x = grid.node(i);
            inputs
                .iter()
                .map(|u| match step_rk4(model, &x, u, spec.dt) {
                    Ok(y) => [y[0], y[1], y[2], y[3]],
                    Err(_) => [f64::NAN; 4],
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();
    grid.history.push(grid.viable_count());

    for _ in 0..spec.max_iter {
        let next = workers.map(&ids, |&i| {
            grid.viable[i]
                && succ[i * k..(i + 1) * k]
                    .iter()
                    .any(|y| grid.interpolate(&grid.viable, y).is_some_and(|v| v >= 0.5))
        });
        let changed = next.iter().zip(&grid.viable).filter(|(a, b)| a != b).count();
        let count = next.iter().filter(|v| **v).count();
        if count > *grid.history.last().unwrap() {
            return Err(Error::Invariant("viable set grew during iteration".into()));
        }
        grid.viable = next;
        grid.history.push(count);
        if changed == 0 {
            return Ok(grid);
        }
    }
    let changed = grid.history[grid.history.len() - 2] - grid.history[grid.history.len() - 1];
    Err(Error::NotConverged { iterations: spec.max_iter, changed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Primitive;
    use crate::dynamics::DoubleIntegrator;

    fn spec(nodes: usize) -> ViabilitySpec {
        ViabilitySpec {
            nodes,
            position_lower: [0.0, 0.0],
            position_upper: [10.0, 10.0],
            velocity_lower: [-2.0, -2.0],
            velocity_upper: [2.0, 2.0],
            dt: 0.5,
            input_levels: 3,
            max_iter: 100,
        }
    }

    #[test]
    fn free_space_keeps_every_node_with_a_stopping_input() {
        let m = DoubleIntegrator::new(1.0).unwrap();
        let s = ConstraintSnapshot::new(0.0, vec![Primitive::Constant { value: 1.0 }], &[0, 1], 4).unwrap();
        let g = viability_oracle(&m, &s, &spec(5), &Workers::sequential()).unwrap();
        // at rest in the interior the zero input is a fixed point
        assert!(g.query(&[5.0, 5.0, 0.0, 0.0]));
        assert!(g.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn node_inside_obstacle_is_not_viable() {
        let m = DoubleIntegrator::new(1.0).unwrap();
        let s = ConstraintSnapshot::new(
            0.0,
            vec![Primitive::Ball { center: vec![5.0, 5.0], radius: 1.5, velocity: None }],
            &[0, 1],
            4,
        )
        .unwrap();
        let g = viability_oracle(&m, &s, &spec(5), &Workers::sequential()).unwrap();
        assert!(!g.query(&[5.0, 5.0, 0.0, 0.0]));
        assert!(!g.query(&[50.0, 5.0, 0.0, 0.0]));
    }

    #[test]
    fn interpolation_reproduces_node_values() {
        let g = ViabilityGrid {
            axes: vec![linspace(0.0, 1.0, 2); 4],
            viable: (0..16).map(|i| i % 3 == 0).collect(),
            history: vec![],
        };
        for i in 0..16 {
            let x = g.node(i);
            assert_eq!(g.interpolate(&g.viable, &x), Some(if i % 3 == 0 { 1.0 } else { 0.0 }));
        }
    }
}
