use std::sync::Arc;

use serde::Serialize;

use super::kernel::{build_discounted_k, build_k, ColumnStats, KernelMatrix};
use super::OperatorError;
use crate::grid::{Grid, GridDensity, GridError};
use crate::model::{Orientation, ResetKernel, ScenarioSpec};

/// Margin above one required of the liminf in the stability test.
pub const BLAS_MARGIN: f64 = 1e-3;
/// Pointwise slack in the subinvariance test.
pub const SUBINVARIANCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct StochasticVerdict {
    pub stochastic: bool,
    pub q_downstream: f64,
    pub columns: ColumnStats,
}

/// Column-mass evidence that `K` conserves probability.
pub fn check_stochastic(k: &KernelMatrix, scenario: &ScenarioSpec) -> StochasticVerdict {
    let columns = k.stats();
    let q_downstream = scenario.dynamics.q_downstream();
    StochasticVerdict { stochastic: k.warning.is_none() && q_downstream == f64::INFINITY, q_downstream, columns }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubinvarianceOutcome {
    pub holds: bool,
    /// Largest `(P phi R_lambda u - u)` density excess over the grid.
    pub max_violation: f64,
    pub lambda: f64,
}

/// Tests `P phi R_lambda u <= u` cellwise on densities.
pub fn check_subinvariance(scenario: &ScenarioSpec, u: &GridDensity, lambda: f64) -> Result<SubinvarianceOutcome, OperatorError> {
    let grid = u.grid().clone();
    if u.masses().iter().any(|&m| !(m > 0.0)) {
        return Err(OperatorError::InvalidArgument("subinvariance needs a strictly positive density".into()));
    }
    let k = build_discounted_k(scenario, grid.clone(), lambda)?;
    let (image, _) = k.apply_masses(u.masses());
    let max_violation = image
        .iter()
        .zip(u.masses())
        .enumerate()
        .map(|(i, (a, b))| (a - b) / grid.width(i))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SubinvarianceOutcome { holds: max_violation <= SUBINVARIANCE_SLACK, max_violation, lambda })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum BlasVerdict {
    StableInvariantExists { liminf: f64 },
    NoInvariantDensity { sup: f64 },
    Inconclusive { reason: &'static str, liminf: f64 },
}

/// Compares `Q(lambda(x)) - Q(x)` with one over `[x_max / 4, x_max]` for a
/// deterministic reset on an unbounded growth domain.
pub fn check_blas(scenario: &ScenarioSpec) -> BlasVerdict {
    let dyn_ = &scenario.dynamics;
    let dom = dyn_.domain();
    let inconclusive = |reason| BlasVerdict::Inconclusive { reason, liminf: f64::NAN };
    let ResetKernel::Deterministic(reset) = &scenario.reset else {
        return inconclusive("reset is not deterministic");
    };
    if dom.orientation != Orientation::Growth || dom.d1.is_finite() {
        return inconclusive("state space is not unbounded above");
    }
    if dyn_.hazard.kind.is_zero() {
        return inconclusive("hazard vanishes identically");
    }
    if !dyn_.q_upstream().is_finite() {
        return inconclusive("Q diverges at the left endpoint");
    }
    let x_max = scenario.grid.x_max;
    let samples = 400;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=samples {
        let x = x_max * 0.25f64.powf(1.0 - i as f64 / samples as f64);
        if !(dyn_.phi(x) > 0.0) {
            return inconclusive("hazard is not positive near the right end");
        }
        let d = dyn_.q(reset.lambda(x)) - dyn_.q(x);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo > 1.0 + BLAS_MARGIN {
        BlasVerdict::StableInvariantExists { liminf: lo }
    } else if hi <= 1.0 {
        BlasVerdict::NoInvariantDensity { sup: hi }
    } else {
        BlasVerdict::Inconclusive { reason: "liminf within margin of one", liminf: lo }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum PartialIntegrality {
    /// `g(sigma(x)) != sigma'(x) g(x)` at `x` with the hazard positive there.
    Witness { x: f64, defect: f64 },
    NotPartiallyIntegral { max_relative_defect: f64 },
    NotApplicable,
}

pub fn check_partial_integrality(scenario: &ScenarioSpec, grid: &Grid) -> PartialIntegrality {
    let ResetKernel::Deterministic(reset) = &scenario.reset else {
        return PartialIntegrality::NotApplicable;
    };
    let dyn_ = &scenario.dynamics;
    let dom = dyn_.domain();
    let breaks = dyn_.hazard.breakpoints();
    let mut worst: f64 = 0.0;
    for x in grid.centers() {
        if breaks.iter().any(|b| (x - b).abs() <= 1e-9 * b.abs().max(1.0)) || !(dyn_.phi(x) > 0.0) {
            continue;
        }
        let s = reset.sigma(x);
        if !dom.contains(s) {
            continue;
        }
        let lhs = dyn_.g(s);
        let rhs = reset.dsigma(x) * dyn_.g(x);
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        let rel = (lhs - rhs).abs() / scale;
        if rel > 1e-9 {
            return PartialIntegrality::Witness { x, defect: lhs - rhs };
        }
        worst = worst.max(rel);
    }
    PartialIntegrality::NotPartiallyIntegral { max_relative_defect: worst }
}

/// Interior masses of `K^n u` for `n = 0..=steps`.
pub fn mass_decay(k: &KernelMatrix, u: &GridDensity, steps: usize) -> Result<Vec<f64>, OperatorError> {
    if u.grid().edges() != k.grid().edges() {
        return Err(GridError::Mismatch.into());
    }
    let mut v = u.masses().to_vec();
    let mut out = vec![v.iter().sum()];
    for _ in 0..steps {
        v = k.apply_masses(&v).0;
        out.push(v.iter().sum());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub scenario: String,
    pub cells: usize,
    pub is_k_stochastic: StochasticVerdict,
    pub blas: BlasVerdict,
    pub partial_integrality: PartialIntegrality,
    /// Discounted chain applied to its own normalized leading vector.
    pub subinvariance: Option<SubinvarianceOutcome>,
    pub mass_decay_lambda: f64,
    pub mass_decay: Vec<f64>,
}

/// All diagnostics at discount `lambda = 1` on the scenario grid.
pub fn diagnose(scenario: &ScenarioSpec, grid: Arc<Grid>) -> Result<DiagnosticsReport, OperatorError> {
    let lambda = 1.0;
    let k = build_k(scenario, grid.clone())?;
    let is_k_stochastic = check_stochastic(&k, scenario);
    let kl = build_discounted_k(scenario, grid.clone(), lambda)?;
    let start = GridDensity::uniform(grid.clone());
    let mass_decay = mass_decay(&kl, &start, 50)?;

    // Leading vector of the discounted chain as subinvariance witness.
    let mut v = start.masses().to_vec();
    for _ in 0..2000 {
        let (w, _) = kl.apply_masses(&v);
        let m: f64 = w.iter().sum();
        if !(m > 0.0) {
            break;
        }
        v = w.into_iter().map(|x| x / m).collect();
    }
    let floor = f64::MIN_POSITIVE;
    let witness = GridDensity::new(grid.clone(), v.into_iter().map(|x| x.max(floor)).collect())?;
    let subinvariance = check_subinvariance(scenario, &witness, lambda).ok();

    Ok(DiagnosticsReport {
        scenario: scenario.id.clone(),
        cells: grid.n(),
        is_k_stochastic,
        blas: check_blas(scenario),
        partial_integrality: check_partial_integrality(scenario, &grid),
        subinvariance,
        mass_decay_lambda: lambda,
        mass_decay,
    })
}
