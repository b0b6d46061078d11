//! Minimum-norm projection QP
//!
//! ```text
//!   minimize   ½‖u − u_nom‖²
//!   subject to aᵢ·u ≥ bᵢ        (rows)
//!              lower ≤ u ≤ upper (box)
//! ```
//!
//! solved with a dual active-set method (Goldfarb–Idnani specialised to an
//! identity Hessian). The iteration starts at the unconstrained minimiser
//! `u_nom`, so an instance whose constraints are all satisfied there returns
//! `u_nom` untouched.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::dot;

/// Affine inequality `a·u ≥ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Row {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        Row { a, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vec<f64>,
    /// One multiplier per constraint: rows first, then `lower` and `upper`
    /// bound for each coordinate (zero for inactive or infinite bounds).
    pub multipliers: Vec<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

const MAX_ITER: usize = 200;

/// All constraints in `a·u ≥ b` form: rows, then lower bounds, then upper bounds.
fn stacked(rows: &[Row], lower: &[f64], upper: &[f64]) -> Vec<Row> {
    let n = lower.len();
    let mut all = rows.to_vec();
    for (i, lo) in lower.iter().enumerate() {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        all.push(Row { a, b: *lo });
    }
    for (i, hi) in upper.iter().enumerate() {
        let mut a = vec![0.0; n];
        a[i] = -1.0;
        all.push(Row { a, b: -hi });
    }
    all
}

fn validate(u_nom: &[f64], rows: &[Row], lower: &[f64], upper: &[f64]) -> Result<()> {
    let n = u_nom.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Dimension { what: "QP box", expected: n, got: lower.len().min(upper.len()) });
    }
    if let Some(r) = rows.iter().find(|r| r.a.len() != n) {
        return Err(Error::Dimension { what: "QP row", expected: n, got: r.a.len() });
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::Argument("QP box is empty".into()));
    }
    let finite = u_nom.iter().all(|v| v.is_finite())
        && rows.iter().all(|r| r.b.is_finite() && r.a.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::NonFinite { what: "QP data" });
    }
    Ok(())
}

/// `argmin ‖u − u_nom‖²` subject to `rows` and the box.
pub fn qp_min_norm(u_nom: &[f64], rows: &[Row], lower: &[f64], upper: &[f64]) -> Result<QpSolution> {
    validate(u_nom, rows, lower, upper)?;
    let n = u_nom.len();
    let cons = stacked(rows, lower, upper);
    let usable: Vec<bool> = cons.iter().map(|c| c.b.is_finite() && c.b != f64::NEG_INFINITY).collect();
    let scale: Vec<f64> = cons.iter().map(|c| crate::linalg::norm(&c.a)).collect();

    let mut x = u_nom.to_vec();
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let slack = |x: &[f64], j: usize| dot(&cons[j].a, x) - cons[j].b;
    let tol = |j: usize| 1e-12 * (1.0 + cons[j].b.abs()).max(scale[j]);

    let mut iterations = 0;
    loop {
        // most violated constraint, measured in distance units
        let mut p = None;
        let mut worst = 0.0;
        for j in 0..cons.len() {
            if !usable[j] || scale[j] == 0.0 || active.contains(&j) {
                if usable[j] && scale[j] == 0.0 && cons[j].b > 0.0 {
                    return Err(Error::Infeasible { row: j, violation: cons[j].b });
                }
                continue;
            }
            let s = slack(&x, j);
            if s < -tol(j) && s / scale[j] < worst {
                worst = s / scale[j];
                p = Some(j);
            }
        }
        let Some(p) = p else {
            break;
        };
        let mut lambda_p = 0.0;
        loop {
            iterations += 1;
            if iterations > MAX_ITER {
                return Err(Error::Infeasible { row: p, violation: -slack(&x, p) });
            }
            let ap = &cons[p].a;
            // r = (NᵀN)⁻¹Nᵀa_p, z = a_p − N r
            let (r, z) = if active.is_empty() {
                (Vec::new(), ap.clone())
            } else {
                let q = active.len();
                let nmat = DMatrix::from_fn(n, q, |i, k| cons[active[k]].a[i]);
                let gram = nmat.transpose() * &nmat;
                let rhs = nmat.transpose() * DVector::from_column_slice(ap);
                let r = match gram.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => gram
                        .lu()
                        .solve(&rhs)
                        .ok_or(Error::Invariant("dependent active set in QP".into()))?,
                };
                let z = DVector::from_column_slice(ap) - &nmat * &r;
                (r.iter().copied().collect(), z.iter().copied().collect())
            };
            let z_norm = crate::linalg::norm(&z);
            // dual (partial) step
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (k, rk) in r.iter().enumerate() {
                if *rk > 1e-14 {
                    let ratio = lambda[k] / rk;
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(k);
                    }
                }
            }
            // primal (full) step
            let s_p = slack(&x, p);
            let t2 = if z_norm > 1e-12 * scale[p] {
                (-s_p / dot(&z, ap)).max(0.0)
            } else {
                f64::INFINITY
            };
            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::Infeasible { row: p, violation: -s_p });
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                for (xi, zi) in x.iter_mut().zip(&z) {
                    *xi += t * zi;
                }
            }
            for (l, rk) in lambda.iter_mut().zip(&r) {
                *l -= t * rk;
            }
            lambda_p += t;
            if t2 <= t1 {
                active.push(p);
                lambda.push(lambda_p);
                break;
            }
            let k = drop.expect("finite partial step has a blocking constraint");
            active.remove(k);
            lambda.remove(k);
        }
    }

    let mut multipliers = vec![0.0; cons.len()];
    for (j, l) in active.iter().zip(&lambda) {
        multipliers[*j] = l.max(0.0);
    }
    Ok(QpSolution { u: x, multipliers, active, iterations })
}

/// Largest KKT violation of a candidate solution: stationarity, primal and
/// dual feasibility, and complementary slackness.
pub fn kkt_residual(u_nom: &[f64], rows: &[Row], lower: &[f64], upper: &[f64], sol: &QpSolution) -> f64 {
    let cons = stacked(rows, lower, upper);
    let mut worst = 0.0f64;
    for i in 0..u_nom.len() {
        let mut g = sol.u[i] - u_nom[i];
        for (c, l) in cons.iter().zip(&sol.multipliers) {
            if *l != 0.0 {
                g -= l * c.a[i];
            }
        }
        worst = worst.max(g.abs());
    }
    for (c, l) in cons.iter().zip(&sol.multipliers) {
        if !c.b.is_finite() {
            continue;
        }
        let s = dot(&c.a, &sol.u) - c.b;
        worst = worst.max((-s).max(0.0));
        worst = worst.max((-l).max(0.0));
        worst = worst.max((l * s).abs());
    }
    worst
}
