//! Trajectory-language metric between policies, sampled approximation
//! precision of a library against an admissible family, and the sampled
//! completeness check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{lipschitz_estimate, ConstraintSnapshot, StateBox};
use crate::dynamics::{flow, ControlAffine, ModelSpec, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::distance;
use crate::policies::{policy_from_spec, PiecewiseConstant, Policy, PolicyLibrary, PolicySpec};
use crate::rollout::Workers;

/// `max_i ‖σ_a(τ_i) − σ_b(τ_i)‖` over a shared sample grid.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::Argument("trajectories are sampled on different grids".into()));
    }
    Ok(a.states.iter().zip(&b.states).map(|(x, y)| distance(x, y)).fold(0.0, f64::max))
}

/// `d_x(π_a, π_b)`: sup-distance between the two closed-loop flows from `x`
/// over `[0, horizon]`.
pub fn language_metric(
    model: &dyn ControlAffine,
    a: &Policy,
    b: &Policy,
    x: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let ta = flow(model, a, x, 0.0, horizon, dt)?;
    let tb = flow(model, b, x, 0.0, horizon, dt)?;
    trajectory_distance(&ta, &tb)
}

/// Serializable family description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// Open-loop inputs, constant on `segments` equal pieces of the horizon,
    /// drawn uniformly from the input box.
    PiecewiseConstant {
        #[serde(default = "default_segments")]
        segments: usize,
    },
    /// The library itself.
    Library,
    Explicit { policies: Vec<PolicySpec> },
}

fn default_segments() -> usize {
    5
}

#[derive(Debug, Clone)]
enum FamilyKind {
    PiecewiseConstant { segments: usize, segment: f64, lower: Vec<f64>, upper: Vec<f64> },
    Fixed(Vec<Policy>),
}

/// A finite-dimensional or finite stand-in for the admissible policy class.
#[derive(Debug, Clone)]
pub struct AdmissibleFamily {
    kind: FamilyKind,
}

impl AdmissibleFamily {
    pub fn piecewise_constant(model: &dyn ControlAffine, segments: usize, horizon: f64) -> Result<Self> {
        if segments == 0 || !(horizon > 0.0) {
            return Err(Error::Argument("piecewise-constant family needs segments > 0 and horizon > 0".into()));
        }
        let (lower, upper) = (model.input_lower().to_vec(), model.input_upper().to_vec());
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::Argument("piecewise-constant family needs a bounded input box".into()));
        }
        Ok(AdmissibleFamily {
            kind: FamilyKind::PiecewiseConstant { segments, segment: horizon / segments as f64, lower, upper },
        })
    }

    pub fn fixed(policies: Vec<Policy>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::Argument("empty policy family".into()));
        }
        Ok(AdmissibleFamily { kind: FamilyKind::Fixed(policies) })
    }

    pub fn from_spec(
        spec: &FamilySpec,
        model: &dyn ControlAffine,
        model_spec: &ModelSpec,
        library: &PolicyLibrary,
        horizon: f64,
    ) -> Result<Self> {
        match spec {
            FamilySpec::PiecewiseConstant { segments } => Self::piecewise_constant(model, *segments, horizon),
            FamilySpec::Library => Self::fixed(library.policies().to_vec()),
            FamilySpec::Explicit { policies } => Self::fixed(
                policies.iter().map(|p| policy_from_spec(p, model_spec)).collect::<Result<_>>()?,
            ),
        }
    }

    /// Whether `sample` draws at random (otherwise it enumerates).
    pub fn is_sampled(&self) -> bool {
        matches!(self.kind, FamilyKind::PiecewiseConstant { .. })
    }

    /// `n` draws for a sampled family; every member of a fixed family.
    /// Draw `i` depends only on `(seed, i)`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Policy> {
        match &self.kind {
            FamilyKind::Fixed(p) => p.clone(),
            FamilyKind::PiecewiseConstant { segments, segment, lower, upper } => (0..n)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    let values = (0..*segments)
                        .map(|_| {
                            lower
                                .iter()
                                .zip(upper)
                                .map(|(l, u)| if l == u { *l } else { rng.gen_range(*l..=*u) })
                                .collect()
                        })
                        .collect();
                    let law = PiecewiseConstant { segment: *segment, values };
                    Policy::new(format!("sample-{i}"), i as u32, law)
                })
                .collect(),
        }
    }
}

struct FamilyRollouts {
    samples: Vec<Policy>,
    sample_trajs: Vec<Trajectory>,
    library_trajs: Vec<Trajectory>,
    /// Per sample: nearest library index and distance.
    nearest: Vec<(usize, f64)>,
}

fn roll_family(
    model: &dyn ControlAffine,
    library: &PolicyLibrary,
    family: &AdmissibleFamily,
    x: &[f64],
    horizon: f64,
    dt: f64,
    n_samples: usize,
    seed: u64,
    workers: &Workers,
) -> Result<FamilyRollouts> {
    let samples = family.sample(n_samples, seed);
    if samples.is_empty() {
        return Err(Error::Argument("no family samples".into()));
    }
    let library_trajs = workers
        .map(library.policies(), |p| flow(model, p, x, 0.0, horizon, dt))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rolled = workers.map(&samples, |p| -> Result<(Trajectory, (usize, f64))> {
        let t = flow(model, p, x, 0.0, horizon, dt)?;
        let mut best = (0, f64::INFINITY);
        for (k, l) in library_trajs.iter().enumerate() {
            let d = trajectory_distance(&t, l)?;
            if d < best.1 {
                best = (k, d);
            }
        }
        Ok((t, best))
    });
    let mut sample_trajs = Vec::with_capacity(samples.len());
    let mut nearest = Vec::with_capacity(samples.len());
    for r in rolled {
        let (t, n) = r?;
        sample_trajs.push(t);
        nearest.push(n);
    }
    Ok(FamilyRollouts { samples, sample_trajs, library_trajs, nearest })
}

/// `δ̂ = max_{samples} min_{library} d_x`: a lower estimate of the library's
/// approximation precision over the family.
pub fn approximation_precision(
    model: &dyn ControlAffine,
    library: &PolicyLibrary,
    family: &AdmissibleFamily,
    x: &[f64],
    horizon: f64,
    dt: f64,
    n_samples: usize,
    seed: u64,
    workers: &Workers,
) -> Result<f64> {
    let r = roll_family(model, library, family, x, horizon, dt, n_samples, seed, workers)?;
    Ok(r.nearest.iter().map(|n| n.1).fold(0.0, f64::max))
}

/// Certification rule: some sampled policy keeps positive clearance and the
/// library is strictly closer than `γ*/L_h`.
pub fn certifies(delta: f64, gamma_star: f64, lipschitz: f64) -> bool {
    if !(gamma_star > 0.0) {
        return false;
    }
    if lipschitz == 0.0 {
        return delta.is_finite();
    }
    delta < gamma_star / lipschitz
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub family_sample: String,
    pub family_clearance: f64,
    pub library_policy: String,
    pub distance: f64,
    /// Clearance of the library policy's own rollout from the same state.
    pub library_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub delta_hat: f64,
    pub gamma_star: f64,
    pub lipschitz: f64,
    pub threshold: f64,
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub witness: Option<Witness>,
    /// `max speed · dt`: how far the sampled clearances may overstate the
    /// continuous-time minimum.
    pub sampling_band: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Results hold only for the sampled family, not all admissible policies.
    pub family_restricted: bool,
}

fn sampled_clearance(traj: &Trajectory, snapshot: &ConstraintSnapshot) -> f64 {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| snapshot.evaluate_at(s, *t))
        .fold(f64::INFINITY, f64::min)
}

fn bounding_box(trajs: &[&Trajectory]) -> StateBox {
    let n = trajs[0].states[0].len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for s in trajs.iter().flat_map(|t| &t.states) {
        for i in 0..n {
            lo[i] = lo[i].min(s[i]);
            hi[i] = hi[i].max(s[i]);
        }
    }
    StateBox::new(lo, hi)
}

/// Sampled completeness check at state `x` against `snapshot` (obstacles
/// evaluated relative to the snapshot time).
///
/// When certified, the library policy nearest to the best sample must itself
/// roll out with positive clearance; a violation is an [`Error::Invariant`].
pub fn completeness_check(
    model: &dyn ControlAffine,
    library: &PolicyLibrary,
    family: &AdmissibleFamily,
    snapshot: &ConstraintSnapshot,
    x: &[f64],
    horizon: f64,
    dt: f64,
    n_samples: usize,
    seed: u64,
    workers: &Workers,
) -> Result<CompletenessReport> {
    let r = roll_family(model, library, family, x, horizon, dt, n_samples, seed, workers)?;
    let delta_hat = r.nearest.iter().map(|n| n.1).fold(0.0, f64::max);

    let clearances: Vec<f64> = r.sample_trajs.iter().map(|t| sampled_clearance(t, snapshot)).collect();
    let mut best = 0;
    for (i, c) in clearances.iter().enumerate() {
        if *c > clearances[best] {
            best = i;
        }
    }
    let gamma_star = clearances[best];

    let all: Vec<&Trajectory> = r.sample_trajs.iter().chain(&r.library_trajs).collect();
    let lipschitz = lipschitz_estimate(snapshot, &bounding_box(&all), 2000, seed)?;
    let threshold = if lipschitz == 0.0 { f64::INFINITY } else { gamma_star / lipschitz };
    let certified = certifies(delta_hat, gamma_star, lipschitz);
    let reason = if gamma_star <= 0.0 {
        Some("no sampled policy keeps positive clearance".to_string())
    } else if !certified {
        Some(format!("precision {delta_hat} is not below threshold {threshold}"))
    } else {
        None
    };

    let (k, d) = r.nearest[best];
    let library_value = sampled_clearance(&r.library_trajs[k], snapshot);
    if certified && !(library_value > 0.0) {
        return Err(Error::Invariant(format!(
            "certified completeness but library policy `{}` has clearance {library_value}",
            library.policies()[k].id()
        )));
    }
    let sampling_band = all.iter().map(|t| t.max_speed()).fold(0.0, f64::max) * dt;
    Ok(CompletenessReport {
        delta_hat,
        gamma_star,
        lipschitz,
        threshold,
        certified,
        reason,
        witness: Some(Witness {
            family_sample: r.samples[best].id().to_string(),
            family_clearance: gamma_star,
            library_policy: library.policies()[k].id().to_string(),
            distance: d,
            library_value,
        }),
        sampling_band,
        n_samples: r.samples.len(),
        seed,
        family_restricted: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Primitive;
    use crate::dynamics::DoubleIntegrator;
    use crate::policies::{Constant, ZeroControl};

    fn di() -> DoubleIntegrator {
        DoubleIntegrator::new(1.0).unwrap()
    }

    #[test]
    fn constant_inputs_closed_form_distance() {
        // positions differ by ½·Δa·t², largest at t = T
        let a = Policy::new("a", 0, Constant::new(vec![1.0, 0.0]));
        let b = Policy::new("b", 1, Constant::new(vec![0.0, 0.0]));
        let d = language_metric(&di(), &a, &b, &[0.0; 4], 2.0, 0.25).unwrap();
        let (dp, dv): (f64, f64) = (0.5 * 4.0, 2.0);
        assert!((d - dp.hypot(dv)).abs() < 1e-12, "{d}");
    }

    #[test]
    fn self_distance_is_zero() {
        let a = Policy::new("a", 0, Constant::new(vec![0.3, -0.2]));
        assert_eq!(language_metric(&di(), &a, &a, &[1.0, 2.0, 0.5, 0.0], 1.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn certify_boundary_is_strict() {
        assert!(!certifies(0.5, 0.5, 1.0));
        assert!(certifies(0.4999, 0.5, 1.0));
        assert!(!certifies(0.0, 0.0, 1.0));
        assert!(!certifies(0.0, -1.0, 1.0));
    }

    #[test]
    fn sampling_is_reproducible_and_prefix_stable() {
        let f = AdmissibleFamily::piecewise_constant(&di(), 5, 2.0).unwrap();
        let x = [0.0; 4];
        let a = f.sample(8, 7);
        let b = f.sample(3, 7);
        for (p, q) in a.iter().zip(&b) {
            let ta = flow(&di(), p, &x, 0.0, 2.0, 0.1).unwrap();
            let tb = flow(&di(), q, &x, 0.0, 2.0, 0.1).unwrap();
            assert_eq!(ta, tb);
        }
        let c = f.sample(3, 8);
        let t0 = flow(&di(), &a[0], &x, 0.0, 2.0, 0.1).unwrap();
        let t1 = flow(&di(), &c[0], &x, 0.0, 2.0, 0.1).unwrap();
        assert_ne!(t0, t1);
    }

    #[test]
    fn library_family_has_zero_precision() {
        let lib = PolicyLibrary::new(vec![
            Policy::new("zero", 0, ZeroControl),
            Policy::new("push", 1, Constant::new(vec![1.0, 0.0])),
        ])
        .unwrap();
        let fam = AdmissibleFamily::fixed(lib.policies().to_vec()).unwrap();
        let d = approximation_precision(&di(), &lib, &fam, &[0.0; 4], 1.0, 0.1, 0, 0, &Workers::sequential())
            .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn report_for_open_space_certifies() {
        let s = ConstraintSnapshot::new(0.0, vec![Primitive::Constant { value: 1.0 }], &[0, 1], 4).unwrap();
        let lib = PolicyLibrary::new(vec![Policy::new("zero", 0, ZeroControl)]).unwrap();
        let fam = AdmissibleFamily::piecewise_constant(&di(), 5, 1.0).unwrap();
        let r = completeness_check(&di(), &lib, &fam, &s, &[0.0; 4], 1.0, 0.1, 16, 3, &Workers::sequential())
            .unwrap();
        assert!(r.certified);
        assert_eq!(r.lipschitz, 0.0);
        assert!(r.witness.unwrap().library_value > 0.0);
    }
}
