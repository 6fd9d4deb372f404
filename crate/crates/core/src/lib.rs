//! One-dimensional piecewise deterministic Markov processes: a level follows
//! a deterministic flow and is reset at random jump times.
//!
//! The crate provides
//! * [`model`]: flows, hazards, reset kernels, the potentials `G` and `Q`;
//! * [`sampler`]: event-driven Monte Carlo with per-path counter streams;
//! * [`operators`]: grid discretizations of the semigroup, resolvent and
//!   jump operators, invariant densities and stochasticity diagnostics;
//! * [`pde`]: finite-volume evolution of the density equation;
//! * [`reference`]: closed-form densities and series used as oracles;
//! * [`verify`]: the end-to-end acceptance checks.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod grid;
pub mod model;
pub mod operators;
pub mod pde;
pub mod reference;
pub mod numeric;
pub mod sampler;
pub mod verify;
