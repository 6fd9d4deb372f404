//! Grid discretizations of the transport, survival, resolvent and jump
//! operators, the jump chain `K`, power iteration for its invariant density
//! and stability diagnostics.
//!
//! Everything acts on [`GridDensity`] cell masses. Sources are treated as
//! flat inside each cell and every kernel is integrated exactly over cells
//! (closed forms where available, Gauss rules otherwise), so column sums are
//! true transition probabilities. Mass mapped outside the truncation goes to
//! the density's leakage ledger.

pub mod builders;
mod diagnostics;
mod invariant;
mod kernel;
pub mod pointwise;
pub mod structured;

use thiserror::Error;

use crate::grid::GridError;

pub use diagnostics::{
    check_blas, check_partial_integrality, check_stochastic, check_subinvariance, diagnose, mass_decay, BlasVerdict,
    DiagnosticsReport, PartialIntegrality, StochasticVerdict, SubinvarianceOutcome,
};
pub use invariant::{invariant_density, lift_to_continuous, InvariantOptions, InvariantResult};
pub use kernel::{
    apply_p, apply_p0, apply_phi_r0, apply_s, build_discounted_k, build_jump, build_k, build_phi_resolvent,
    build_resolvent, resolvent_apply, ColumnStats, KernelMatrix, OperatorLabel,
};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("no invariant density: iterate mass decays by factor {decay_factor} per step after {iterations} steps")]
    NoInvariant { decay_factor: f64, iterations: usize },
    #[error("power iteration did not converge in {iterations} steps (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("lifted density is not integrable: {0}")]
    NotIntegrable(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}
