//! Policy-library control barrier function safety filter.
//!
//! A nominal controller is filtered against a perceived constraint set by
//! rolling out a ranked library of fallback policies, picking the least
//! invasive one whose finite-horizon clearance is positive, and minimally
//! correcting the nominal input so that clearance does not decay faster than
//! a class-K rate.

pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod metric;
pub mod policies;
pub mod qp;
pub mod rollout;
pub mod scenarios;

pub use constraints::{Combiner, ConstraintSnapshot, PerceptionSchedule, Primitive, ScheduleSpec};
pub use dynamics::{flow, ControlAffine, Model, ModelSpec, Trajectory};
pub use error::{Error, Result};
pub use filter::{filter_step, FilterDecision, FilterParams, QpStatus};
pub use policies::{Policy, PolicyLibrary, PolicySpec};
pub use rollout::{RolloutParams, RolloutResult, Workers};
