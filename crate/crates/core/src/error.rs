use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    /// Integration produced a non-finite state (or left the model's valid
    /// chart). `time` is measured from the start of the integration.
    #[error("integration blew up at t = {time} s")]
    BlowUp { time: f64, last_state: Vec<f64> },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("time {t} s precedes the first perception update at {t0} s")]
    OutOfRange { t: f64, t0: f64 },

    #[error("constraint gradient is undefined at {0:?}")]
    DegenerateGradient(Vec<f64>),

    /// The QP feasible set is empty; `row` is the index of the constraint
    /// that remained violated when the solver gave up.
    #[error("QP infeasible, constraint row {row} cannot be satisfied (violation {violation})")]
    Infeasible { row: usize, violation: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("viability iteration did not converge after {iterations} sweeps ({changed} nodes still changing)")]
    NotConverged { iterations: usize, changed: usize },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}
