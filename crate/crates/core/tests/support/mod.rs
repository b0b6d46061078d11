//! Independent oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use plcbf::policies::PiecewiseConstant;
use plcbf::qp::Row;
use plcbf::scenarios::ScenarioConfig;
use plcbf::Policy;
use rand::Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load_config(name: &str) -> ScenarioConfig {
    let text = std::fs::read_to_string(config_path(name)).expect("config readable");
    ScenarioConfig::from_json(&text).expect("shipped config parses")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, p);
        rhs.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            rhs[r] -= f * rhs[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

fn subsets(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for i in 0..n {
        let grown: Vec<Vec<usize>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut t = s.clone();
                t.push(i);
                t
            })
            .collect();
        out.extend(grown);
    }
    out
}

/// Exhaustive active-set enumeration for `min ‖u − u0‖²` s.t. `a·u ≥ b` and
/// the box: project onto every candidate face, keep the closest feasible.
pub fn exhaustive_qp(u0: &[f64], rows: &[Row], lower: &[f64], upper: &[f64]) -> Option<Vec<f64>> {
    let n = u0.len();
    let mut cons: Vec<(Vec<f64>, f64)> = rows.iter().map(|r| (r.a.clone(), r.b)).collect();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        if lower[i].is_finite() {
            cons.push((e.clone(), lower[i]));
        }
        if upper[i].is_finite() {
            cons.push((e.iter().map(|v| -v).collect(), -upper[i]));
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in subsets(cons.len(), n) {
        let gram: Vec<Vec<f64>> = s.iter().map(|&i| s.iter().map(|&j| dot(&cons[i].0, &cons[j].0)).collect()).collect();
        let rhs: Vec<f64> = s.iter().map(|&i| cons[i].1 - dot(&cons[i].0, u0)).collect();
        let Some(lam) = solve_dense(gram, rhs) else { continue };
        let mut u = u0.to_vec();
        for (l, &i) in lam.iter().zip(&s) {
            for k in 0..n {
                u[k] += l * cons[i].0[k];
            }
        }
        let feasible = cons.iter().all(|(a, b)| dot(a, &u) - b >= -1e-9 * (1.0 + b.abs()));
        if !feasible {
            continue;
        }
        let d: f64 = u.iter().zip(u0).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, u));
        }
    }
    best.map(|(_, u)| u)
}

/// One-row CBF-QP with a box, solved on its dual: `u(λ) = clip(u0 + λ·a)`
/// and bisection on `a·u(λ) = b`.
pub fn cbf_qp_direct(u0: &[f64], a: &[f64], b: f64, lower: &[f64], upper: &[f64]) -> Option<Vec<f64>> {
    let u_of = |lam: f64| -> Vec<f64> {
        (0..u0.len()).map(|i| (u0[i] + lam * a[i]).clamp(lower[i], upper[i])).collect()
    };
    if dot(a, &u_of(0.0)) >= b {
        return Some(u_of(0.0));
    }
    let mut hi = 1.0;
    while dot(a, &u_of(hi)) < b {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dot(a, &u_of(mid)) < b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(u_of(hi))
}

/// Open-loop piecewise-constant DI input with entries in `[-amp, amp]`.
pub fn random_pwc<R: Rng>(rng: &mut R, id: &str, segments: usize, horizon: f64, amp: f64) -> Policy {
    let values = (0..segments)
        .map(|_| vec![rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp)])
        .collect();
    Policy::new(id, 0, PiecewiseConstant::new(horizon / segments as f64, values).unwrap())
}

/// Same segments as `base` shifted by at most `eta` per entry.
pub fn perturbed_pwc<R: Rng>(rng: &mut R, id: &str, base: &[Vec<f64>], horizon: f64, eta: f64) -> Policy {
    let values = base
        .iter()
        .map(|v| v.iter().map(|x| x + rng.gen_range(-eta..=eta)).collect())
        .collect();
    Policy::new(id, 1, PiecewiseConstant::new(horizon / base.len() as f64, values).unwrap())
}

pub fn pwc_values<R: Rng>(rng: &mut R, segments: usize, amp: f64) -> Vec<Vec<f64>> {
    (0..segments)
        .map(|_| vec![rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp)])
        .collect()
}
