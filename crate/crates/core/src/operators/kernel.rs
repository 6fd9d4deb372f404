use std::sync::Arc;

use serde::Serialize;

use super::builders::{deterministic_chain, jump_operator, occupation_operator, remap_columns, OccupationWeight};
use super::structured::GridOperator;
use super::OperatorError;
use crate::grid::{Grid, GridDensity, GridError, Leakage};
use crate::model::{Dynamics, FlowModel, ResetKernel, ScenarioSpec};

/// Which continuous operator a [`KernelMatrix`] discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OperatorLabel {
    Jump,
    PhiResolvent { lambda: f64 },
    Resolvent { lambda: f64 },
    /// `P phi R_0`.
    Chain,
    /// `P phi R_lambda`.
    DiscountedChain { lambda: f64 },
}

/// Summary of column sums. `accounted` adds the truncation leakage of each
/// column to its interior mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnStats {
    pub min_mass: f64,
    pub max_mass: f64,
    pub min_accounted: f64,
    pub max_accounted: f64,
    pub max_leak: f64,
}

/// Transfer matrix on a grid: entry `(i, j)` is the mass landing in cell `i`
/// per unit mass in cell `j`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub label: OperatorLabel,
    grid: Arc<Grid>,
    op: GridOperator,
    column_mass: Vec<f64>,
    leak_below: Vec<f64>,
    leak_above: Vec<f64>,
    /// Set when column sums fall short of one beyond what leakage explains.
    pub warning: Option<String>,
}

impl KernelMatrix {
    pub fn new(label: OperatorLabel, grid: Arc<Grid>, op: GridOperator) -> Self {
        let column_mass = op.column_mass();
        let (leak_below, leak_above) = op.column_leaks();
        Self { label, grid, op, column_mass, leak_below, leak_above, warning: None }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn operator(&self) -> &GridOperator {
        &self.op
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.op.entry(i, j)
    }

    pub fn column_mass(&self) -> &[f64] {
        &self.column_mass
    }

    /// Per-column mass sent below and above the truncation.
    pub fn column_leakage(&self, j: usize) -> Leakage {
        Leakage { below: self.leak_below[j], above: self.leak_above[j] }
    }

    pub fn stats(&self) -> ColumnStats {
        let mut s = ColumnStats {
            min_mass: f64::INFINITY,
            max_mass: f64::NEG_INFINITY,
            min_accounted: f64::INFINITY,
            max_accounted: f64::NEG_INFINITY,
            max_leak: 0.0,
        };
        for j in 0..self.n() {
            let m = self.column_mass[j];
            let leak = self.leak_below[j] + self.leak_above[j];
            s.min_mass = s.min_mass.min(m);
            s.max_mass = s.max_mass.max(m);
            s.min_accounted = s.min_accounted.min(m + leak);
            s.max_accounted = s.max_accounted.max(m + leak);
            s.max_leak = s.max_leak.max(leak);
        }
        s
    }

    /// Raw product on cell masses.
    pub fn apply_masses(&self, v: &[f64]) -> (Vec<f64>, Leakage) {
        self.op.apply(v)
    }

    /// Image of `v`; the outgoing leakage is added to the copied ledger.
    pub fn apply(&self, v: &GridDensity) -> Result<GridDensity, OperatorError> {
        if v.grid().edges() != self.grid.edges() {
            return Err(GridError::Mismatch.into());
        }
        let (out, leak) = self.op.apply(v.masses());
        Ok(GridDensity::from_parts(self.grid.clone(), out, v.leakage + leak))
    }

    /// Dense copy (small grids only).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.op.to_dense()
    }

    fn flag_substochastic(mut self, threshold: f64) -> Self {
        let s = self.stats();
        if s.min_accounted < threshold {
            self.warning = Some(format!(
                "column mass plus leakage drops to {:.6} (interior min {:.6}); operator is not stochastic on this grid",
                s.min_accounted, s.min_mass
            ));
        }
        self
    }
}

fn check_time(t: f64) -> Result<(), OperatorError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(OperatorError::InvalidArgument(format!("duration must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

fn backward_edges(flow: &FlowModel, grid: &Grid, t: f64) -> Vec<f64> {
    grid.edges().iter().map(|&x| flow.flow_map(-t, x)).collect()
}

/// Transport along the flow for time `t` without jumps.
pub fn apply_p0(flow: &FlowModel, t: f64, u: &GridDensity) -> Result<GridDensity, OperatorError> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(u.clone());
    }
    let grid = u.grid().clone();
    let cols = remap_columns(&grid, &backward_edges(flow, &grid, t));
    let (out, leak) = cols.apply(u.masses());
    Ok(GridDensity::from_parts(grid, out, u.leakage + leak))
}

/// Transport for time `t` weighted by the probability of no jump, evaluated
/// along the characteristic through each target cell center.
pub fn apply_s(dynamics: &Dynamics, t: f64, u: &GridDensity) -> Result<GridDensity, OperatorError> {
    let mut out = apply_p0(&dynamics.flow, t, u)?;
    if t == 0.0 {
        return Ok(out);
    }
    let grid = out.grid().clone();
    for (i, m) in out.masses_mut().iter_mut().enumerate() {
        let c = grid.center(i);
        let back = dynamics.flow_map(-t, c);
        let factor = (dynamics.q(back) - dynamics.q(c)).exp();
        *m *= if factor.is_finite() { factor.min(1.0) } else { 0.0 };
    }
    Ok(out)
}

/// Resolvent kernel matrix `R_lambda` (`lambda = 0` gives `R_0`).
pub fn build_resolvent(dynamics: &Dynamics, grid: Arc<Grid>, lambda: f64) -> KernelMatrix {
    let op = occupation_operator(dynamics, &grid, lambda, OccupationWeight::Time);
    KernelMatrix::new(OperatorLabel::Resolvent { lambda }, grid, GridOperator::SemiSeparable(op))
}

/// `phi R_lambda`: where the first jump happens, discounted by `exp(-lambda t)`.
pub fn build_phi_resolvent(dynamics: &Dynamics, grid: Arc<Grid>, lambda: f64) -> KernelMatrix {
    let op = occupation_operator(dynamics, &grid, lambda, OccupationWeight::Hazard);
    KernelMatrix::new(OperatorLabel::PhiResolvent { lambda }, grid, GridOperator::SemiSeparable(op))
}

pub fn build_jump(reset: &ResetKernel, dynamics: &Dynamics, grid: Arc<Grid>) -> KernelMatrix {
    let op = jump_operator(reset, dynamics, &grid);
    KernelMatrix::new(OperatorLabel::Jump, grid, op)
}

pub fn resolvent_apply(dynamics: &Dynamics, lambda: f64, v: &GridDensity) -> Result<GridDensity, OperatorError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(OperatorError::InvalidArgument(format!("resolvent needs lambda > 0, got {lambda}")));
    }
    build_resolvent(dynamics, v.grid().clone(), lambda).apply(v)
}

pub fn apply_phi_r0(dynamics: &Dynamics, v: &GridDensity) -> Result<GridDensity, OperatorError> {
    build_phi_resolvent(dynamics, v.grid().clone(), 0.0).apply(v)
}

pub fn apply_p(reset: &ResetKernel, dynamics: &Dynamics, w: &GridDensity) -> Result<GridDensity, OperatorError> {
    build_jump(reset, dynamics, w.grid().clone()).apply(w)
}

const STOCHASTIC_SLACK: f64 = 1e-3;

/// The jump chain `K = P phi R_0` on `grid`.
pub fn build_k(scenario: &ScenarioSpec, grid: Arc<Grid>) -> Result<KernelMatrix, OperatorError> {
    let dynamics = &scenario.dynamics;
    let op = match &scenario.reset {
        ResetKernel::Deterministic(d) => GridOperator::Chain(deterministic_chain(dynamics, d, grid.clone())),
        reset => GridOperator::Composite(
            Box::new(jump_operator(reset, dynamics, &grid)),
            Box::new(GridOperator::SemiSeparable(occupation_operator(dynamics, &grid, 0.0, OccupationWeight::Hazard))),
        ),
    };
    let k = KernelMatrix::new(OperatorLabel::Chain, grid, op).flag_substochastic(1.0 - STOCHASTIC_SLACK);
    Ok(k)
}

/// `P phi R_lambda`, the operator in the subinvariance criterion.
pub fn build_discounted_k(scenario: &ScenarioSpec, grid: Arc<Grid>, lambda: f64) -> Result<KernelMatrix, OperatorError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(OperatorError::InvalidArgument(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let dynamics = &scenario.dynamics;
    let op = GridOperator::Composite(
        Box::new(jump_operator(&scenario.reset, dynamics, &grid)),
        Box::new(GridOperator::SemiSeparable(occupation_operator(dynamics, &grid, lambda, OccupationWeight::Hazard))),
    );
    Ok(KernelMatrix::new(OperatorLabel::DiscountedChain { lambda }, grid, op))
}
