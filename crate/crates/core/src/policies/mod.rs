//! Policies, the provided nominal/fallback controllers, and the ordered
//! fallback library.

mod laws;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use laws::{
    Constant, DiEvade, DiGoalPd, Direction, DiStop, PiecewiseConstant, QuadBrake, QuadEvade, QuadWaypoint,
    VehicleBrake, VehicleCruise, VehicleLaneChange, ZeroControl,
};

use crate::dynamics::{ControlAffine, ModelSpec, QuadrotorParams};
use crate::error::{Error, Result};

/// A deterministic state-feedback (and possibly time-varying) control law.
/// Outputs are clamped by [`Policy`] before they reach the model.
pub trait ControlLaw: Send + Sync + fmt::Debug {
    fn control(&self, x: &[f64], t: f64, out: &mut [f64]);
}

/// A named control law with an invasiveness rank (0 = nominal).
#[derive(Clone)]
pub struct Policy {
    id: String,
    rank: u32,
    law: Arc<dyn ControlLaw>,
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Policy")
            .field("id", &self.id)
            .field("rank", &self.rank)
            .field("law", &self.law)
            .finish()
    }
}

impl Policy {
    pub fn new(id: impl Into<String>, rank: u32, law: impl ControlLaw + 'static) -> Self {
        Policy { id: id.into(), rank, law: Arc::new(law) }
    }

    pub fn from_arc(id: impl Into<String>, rank: u32, law: Arc<dyn ControlLaw>) -> Self {
        Policy { id: id.into(), rank, law }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn with_rank(&self, rank: u32) -> Self {
        Policy { rank, ..self.clone() }
    }

    /// Clamped control at `(x, t)`.
    pub fn action(&self, model: &dyn ControlAffine, x: &[f64], t: f64) -> Vec<f64> {
        let mut u = vec![0.0; model.control_dim()];
        self.action_into(model, x, t, &mut u);
        u
    }

    pub fn action_into(&self, model: &dyn ControlAffine, x: &[f64], t: f64, out: &mut [f64]) {
        out.fill(0.0);
        self.law.control(x, t, out);
        for v in out.iter_mut() {
            if v.is_nan() {
                *v = 0.0;
            }
        }
        model.clamp_control(out);
    }
}

/// Policies ordered by strictly increasing invasiveness rank; the rank-0
/// member is the nominal policy.
#[derive(Debug, Clone)]
pub struct PolicyLibrary {
    policies: Vec<Policy>,
}

impl PolicyLibrary {
    pub fn new(mut policies: Vec<Policy>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::Config("policy library is empty".into()));
        }
        let mut ids = HashSet::new();
        let mut ranks = HashSet::new();
        for p in &policies {
            if !ids.insert(p.id.clone()) {
                return Err(Error::Config(format!("duplicate policy id `{}`", p.id)));
            }
            if !ranks.insert(p.rank) {
                return Err(Error::Config(format!("duplicate policy rank {}", p.rank)));
            }
        }
        if !ranks.contains(&0) {
            return Err(Error::Config(
                "library has no nominal policy (a policy with rank 0)".into(),
            ));
        }
        policies.sort_by_key(|p| p.rank);
        Ok(PolicyLibrary { policies })
    }

    pub fn nominal(&self) -> &Policy {
        &self.policies[0]
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Policy> {
        self.policies.iter().find(|p| p.id == id)
    }

    /// The nominal policy plus a single fallback, for baseline filters.
    pub fn single_fallback(&self, id: &str) -> Result<PolicyLibrary> {
        let fallback = self
            .get(id)
            .ok_or_else(|| Error::Config(format!("unknown policy `{id}`")))?;
        PolicyLibrary::new(vec![self.nominal().clone(), fallback.clone()])
    }
}

/// Config entry `{id, type, params, rank}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default = "empty_params")]
    pub params: serde_json::Value,
    pub rank: u32,
}

fn empty_params() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

fn parse<T: serde::de::DeserializeOwned>(spec: &PolicySpec) -> Result<T> {
    serde_json::from_value(spec.params.clone())
        .map_err(|e| Error::Config(format!("policy `{}` params: {e}", spec.id)))
}

fn quad_params(model: &ModelSpec, spec: &PolicySpec) -> Result<QuadrotorParams> {
    match model {
        ModelSpec::Quadrotor { params } => Ok(params.clone()),
        _ => Err(Error::Config(format!(
            "policy `{}` of type `{}` requires a quadrotor model",
            spec.id, spec.kind
        ))),
    }
}

/// Builds one policy from its config entry.
pub fn policy_from_spec(spec: &PolicySpec, model: &ModelSpec) -> Result<Policy> {
    let law: Arc<dyn ControlLaw> = match spec.kind.as_str() {
        "zero" => Arc::new(ZeroControl),
        "constant" => Arc::new(parse::<Constant>(spec)?),
        "piecewise_constant" => Arc::new(parse::<PiecewiseConstant>(spec)?.validated()?),
        "di_goal_pd" => Arc::new(parse::<DiGoalPd>(spec)?),
        "di_stop" => Arc::new(parse::<DiStop>(spec)?),
        "di_evade" => Arc::new(parse::<DiEvade>(spec)?),
        "vehicle_cruise" => Arc::new(parse::<VehicleCruise>(spec)?),
        "vehicle_brake" => Arc::new(parse::<VehicleBrake>(spec)?),
        "vehicle_lane_change" => Arc::new(parse::<VehicleLaneChange>(spec)?),
        "quad_waypoint" => {
            let p = quad_params(model, spec)?;
            Arc::new(parse::<QuadWaypoint>(spec)?.bind(&p))
        }
        "quad_brake" => {
            let p = quad_params(model, spec)?;
            Arc::new(parse::<QuadBrake>(spec)?.bind(&p))
        }
        "quad_evade" => {
            let p = quad_params(model, spec)?;
            Arc::new(parse::<QuadEvade>(spec)?.bind(&p))
        }
        other => {
            return Err(Error::Config(format!(
                "policy `{}`: unknown type `{other}`",
                spec.id
            )))
        }
    };
    Ok(Policy::from_arc(spec.id.clone(), spec.rank, law))
}

/// Builds and validates a library from config entries.
pub fn library_from_config(specs: &[PolicySpec], model: &ModelSpec) -> Result<PolicyLibrary> {
    let policies = specs
        .iter()
        .map(|s| policy_from_spec(s, model))
        .collect::<Result<Vec<_>>>()?;
    PolicyLibrary::new(policies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DoubleIntegrator;
    use serde_json::json;

    fn spec(id: &str, kind: &str, rank: u32) -> PolicySpec {
        PolicySpec { id: id.into(), kind: kind.into(), params: json!({}), rank }
    }

    fn di_spec() -> ModelSpec {
        ModelSpec::DoubleIntegrator { u_max: 1.0 }
    }

    #[test]
    fn stop_at_rest_is_zero() {
        let m = DoubleIntegrator::new(1.0).unwrap();
        let p = Policy::new("stop", 1, DiStop::default());
        assert_eq!(p.action(&m, &[1.0, 2.0, 0.0, 0.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn stop_saturates_against_velocity() {
        let m = DoubleIntegrator::new(1.0).unwrap();
        let p = Policy::new("stop", 1, DiStop { kv: 100.0 });
        assert_eq!(p.action(&m, &[0.0, 0.0, 2.0, 0.0], 0.0), vec![-1.0, 0.0]);
    }

    #[test]
    fn pd_fixed_point_at_goal() {
        let m = DoubleIntegrator::new(1.0).unwrap();
        let p = Policy::new("nom", 0, DiGoalPd { goal: [3.0, -1.0], ..Default::default() });
        assert_eq!(p.action(&m, &[3.0, -1.0, 0.0, 0.0], 5.0), vec![0.0, 0.0]);
    }

    #[test]
    fn four_policy_library_in_rank_order() {
        let specs = vec![
            spec("down", "di_evade", 3),
            spec("nom", "di_goal_pd", 0),
            PolicySpec { params: json!({"direction": "up"}), ..spec("up", "di_evade", 2) },
            spec("stop", "di_stop", 1),
        ];
        let lib = library_from_config(&specs, &di_spec()).unwrap();
        let ids: Vec<_> = lib.policies().iter().map(|p| p.id()).collect();
        assert_eq!(ids, ["nom", "stop", "up", "down"]);
        assert_eq!(lib.nominal().id(), "nom");
    }

    #[test]
    fn library_validation_errors() {
        assert!(matches!(library_from_config(&[], &di_spec()), Err(Error::Config(_))));
        let no_nom = vec![spec("stop", "di_stop", 1), spec("up", "di_evade", 2)];
        assert!(matches!(library_from_config(&no_nom, &di_spec()), Err(Error::Config(_))));
        let dup = vec![spec("a", "di_goal_pd", 0), spec("a", "di_stop", 1)];
        assert!(matches!(library_from_config(&dup, &di_spec()), Err(Error::Config(_))));
        let dup_rank = vec![spec("a", "di_goal_pd", 0), spec("b", "di_stop", 0)];
        assert!(library_from_config(&dup_rank, &di_spec()).is_err());
        let unknown = vec![spec("a", "teleport", 0)];
        assert!(library_from_config(&unknown, &di_spec()).is_err());
        let bad_params = vec![PolicySpec { params: json!({"gain": 1}), ..spec("a", "di_stop", 0) }];
        assert!(library_from_config(&bad_params, &di_spec()).is_err());
        let quad_on_di = vec![spec("a", "quad_brake", 0)];
        assert!(library_from_config(&quad_on_di, &di_spec()).is_err());
    }

    #[test]
    fn clamping_is_idempotent() {
        let m = DoubleIntegrator::new(1.0).unwrap();
        let p = Policy::new("c", 0, Constant::new(vec![3.0, -0.25]));
        let u = p.action(&m, &[0.0; 4], 0.0);
        let mut again = u.clone();
        m.clamp_control(&mut again);
        assert_eq!(u, again);
        assert_eq!(u, vec![1.0, -0.25]);
    }
}
