//! PDMP building blocks: state domain, flow `g`, hazard `phi`, reset kernel,
//! the potentials `G` and `Q`, and complete scenario descriptions.

mod domain;
mod dynamics;
mod flow;
mod hazard;
mod reset;
mod scenario;

use std::sync::Arc;

use thiserror::Error;

pub use domain::{Orientation, StateDomain};
pub use dynamics::Dynamics;
pub use flow::{FlowKind, FlowModel};
pub use hazard::{HazardKind, HazardModel};
pub use reset::{BurstLaw, CdfTable, DeterministicReset, FractionLaw, ResetKernel};
pub use scenario::{builtin_ids, InitialCondition, ScenarioError, ScenarioFile, ScenarioSpec};

/// Shared pointwise evaluator for user supplied functions.
pub type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("integral is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("value {s} is below the range of Q")]
    OutOfRange { s: f64 },
    #[error("{0}")]
    Validation(String),
}

/// `G(x)` for a flow.
pub fn eval_g(flow: &FlowModel, x: f64) -> Result<f64, ModelError> {
    flow.big_g(x)
}

/// `Q(x)` for a hazard attached to a flow.
pub fn eval_q(hazard: &HazardModel, flow: &FlowModel, x: f64) -> f64 {
    hazard.q(flow, x)
}

/// `pi_t x`.
pub fn flow_map(flow: &FlowModel, t: f64, x: f64) -> f64 {
    flow.flow_map(t, x)
}

/// Level at which `Q` first reaches `s` along the flow.
pub fn invert_q(hazard: &HazardModel, flow: &FlowModel, s: f64) -> Result<f64, ModelError> {
    hazard.q_inv(flow, s)
}
