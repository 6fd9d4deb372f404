//! Finite-volume evolution of the density equation: upwind transport along
//! the flow, survival along characteristics, and redeposit of jumped mass
//! through the reset kernel. Mass leaving the truncation is kept in a ledger.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{Grid, GridDensity, GridError, Leakage};
use crate::model::{InitialCondition, Orientation, ScenarioSpec};
use crate::numeric::gauss_legendre10_split;
use crate::operators::{build_jump, KernelMatrix, OperatorError};

/// Courant number used when the step is chosen automatically.
pub const CFL: f64 = 0.9;
/// Largest admissible `dt * max(phi)`.
pub const HAZARD_STEP: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("negative mass {value} in cell {cell} at t = {t}")]
    NegativeDensity { cell: usize, value: f64, t: f64 },
    #[error("no steady state up to horizon {horizon} (residual {residual:e})")]
    NoConvergence { horizon: f64, residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassRecord {
    pub t: f64,
    pub interior: f64,
    /// Cumulative mass that left below the truncation.
    pub leak_low: f64,
    /// Cumulative mass that left above the truncation.
    pub leak_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionConfig {
    pub cells: usize,
    pub dt: f64,
    pub steps: usize,
    pub splitting: &'static str,
}

#[derive(Debug, Clone)]
pub struct EvolutionRun {
    pub snapshots: Vec<(f64, GridDensity)>,
    pub mass_series: Vec<MassRecord>,
    pub config: EvolutionConfig,
}

impl EvolutionRun {
    pub fn final_density(&self) -> &GridDensity {
        &self.snapshots.last().expect("at least the initial snapshot").1
    }
}

/// Precomputed per-cell coefficients of one time step.
pub struct Stepper {
    orientation: Orientation,
    dt: f64,
    /// Fraction of each cell's mass crossing its downstream edge per step.
    courant: Vec<f64>,
    /// Probability of no jump during one step, per cell.
    survive: Vec<f64>,
    jump: KernelMatrix,
}

/// Largest stable step: per-cell Courant bound and the hazard bound.
pub fn max_stable_dt(scenario: &ScenarioSpec, grid: &Grid) -> f64 {
    let dyn_ = &scenario.dynamics;
    let mut limit = f64::INFINITY;
    for i in 0..grid.n() {
        let speed = dyn_.g(grid.left(i)).abs().max(dyn_.g(grid.right(i)).abs()).max(dyn_.g(grid.center(i)).abs());
        if speed > 0.0 {
            limit = limit.min(CFL * grid.width(i) / speed);
        }
        let phi = [grid.left(i), grid.center(i), grid.right(i)].iter().map(|&x| dyn_.phi(x)).fold(0.0, f64::max);
        if phi > 0.0 {
            limit = limit.min(HAZARD_STEP / phi);
        }
    }
    limit
}

impl Stepper {
    pub fn new(scenario: &ScenarioSpec, grid: Arc<Grid>, dt: f64) -> Result<Self, PdeError> {
        let limit = max_stable_dt(scenario, &grid);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(PdeError::CflViolation { dt, limit });
        }
        let dyn_ = &scenario.dynamics;
        let orientation = dyn_.orientation();
        let n = grid.n();
        let courant = (0..n)
            .map(|i| {
                let edge = match orientation {
                    Orientation::Growth => grid.right(i),
                    Orientation::Decay => grid.left(i),
                };
                dt * dyn_.g(edge).abs() / grid.width(i)
            })
            .collect();
        let survive = (0..n)
            .map(|i| {
                let c = grid.center(i);
                let f = (dyn_.q(dyn_.flow_map(-dt, c)) - dyn_.q(c)).exp();
                if f.is_finite() {
                    f.clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let jump = build_jump(&scenario.reset, dyn_, grid.clone());
        Ok(Self { orientation, dt, courant, survive, jump })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `m` by one step and returns the mass that left the grid.
    pub fn step(&self, m: &mut [f64]) -> Leakage {
        let n = m.len();
        let mut leak = Leakage::default();
        // Upwind transport.
        match self.orientation {
            Orientation::Growth => {
                let mut inflow = 0.0;
                for (mi, c) in m.iter_mut().zip(&self.courant) {
                    let out = c * *mi;
                    *mi += inflow - out;
                    inflow = out;
                }
                leak.above += inflow;
            }
            Orientation::Decay => {
                let mut inflow = 0.0;
                for i in (0..n).rev() {
                    let out = self.courant[i] * m[i];
                    m[i] += inflow - out;
                    inflow = out;
                }
                leak.below += inflow;
            }
        }
        // Survival and redeposit.
        let killed: Vec<f64> = m
            .iter_mut()
            .zip(&self.survive)
            .map(|(x, s)| {
                let k = *x * (1.0 - s);
                *x *= s;
                k
            })
            .collect();
        let (gain, jl) = self.jump.apply_masses(&killed);
        for (x, g) in m.iter_mut().zip(gain) {
            *x += g;
        }
        leak + jl
    }
}

fn check_nonnegative(m: &[f64], t: f64) -> Result<(), PdeError> {
    match m.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        Some((cell, &value)) => Err(PdeError::NegativeDensity { cell, value, t }),
        None => Ok(()),
    }
}

/// Evolves `u0` to time `horizon`, keeping `snapshots + 1` equally spaced
/// snapshots (including `t = 0`). `dt = None` picks the largest stable step.
pub fn evolve(
    scenario: &ScenarioSpec,
    u0: &GridDensity,
    horizon: f64,
    dt: Option<f64>,
    snapshots: usize,
) -> Result<EvolutionRun, PdeError> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(PdeError::InvalidArgument(format!("horizon must be finite and nonnegative, got {horizon}")));
    }
    let grid = u0.grid().clone();
    let limit = max_stable_dt(scenario, &grid);
    let dt = dt.unwrap_or(limit);
    let steps = if horizon == 0.0 { 0 } else { (horizon / dt).ceil() as usize };
    // Land exactly on the horizon.
    let dt = if steps > 0 { horizon / steps as f64 } else { dt };
    let stepper = Stepper::new(scenario, grid.clone(), dt)?;
    let snapshots = snapshots.max(1);
    let mut m = u0.masses().to_vec();
    let mut ledger = u0.leakage;
    let mut run = EvolutionRun {
        snapshots: vec![(0.0, u0.clone())],
        mass_series: Vec::with_capacity(steps + 1),
        config: EvolutionConfig { cells: grid.n(), dt, steps, splitting: "lie" },
    };
    let record = |t: f64, m: &[f64], l: Leakage| MassRecord { t, interior: m.iter().sum(), leak_low: l.below, leak_high: l.above };
    run.mass_series.push(record(0.0, &m, ledger));
    let mut next_snapshot = 1;
    for s in 1..=steps {
        ledger += stepper.step(&mut m);
        let t = s as f64 * dt;
        check_nonnegative(&m, t)?;
        run.mass_series.push(record(t, &m, ledger));
        if s * snapshots >= next_snapshot * steps {
            let mut d = GridDensity::new(grid.clone(), m.clone())?;
            d.leakage = ledger;
            run.snapshots.push((t, d));
            next_snapshot += 1;
        }
    }
    Ok(run)
}

/// Initial density of a scenario on a grid.
pub fn initial_density(scenario: &ScenarioSpec, grid: Arc<Grid>) -> Result<GridDensity, PdeError> {
    Ok(match scenario.initial {
        InitialCondition::Uniform => GridDensity::uniform(grid),
        InitialCondition::EqualCells => GridDensity::equal_cells(grid),
        InitialCondition::Point { x } => GridDensity::point_mass(grid, x)?,
    })
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub density: GridDensity,
    pub horizon: f64,
    pub residual: f64,
}

/// Horizon at which doubling stops.
pub const MAX_STEADY_HORIZON: f64 = 8192.0;

/// Evolves the scenario's initial density, doubling the horizon until the
/// normalized densities at `T` and `2T` are within `tol` in L1.
pub fn steady_state(scenario: &ScenarioSpec, grid: Arc<Grid>, tol: f64) -> Result<SteadyState, PdeError> {
    let u0 = initial_density(scenario, grid.clone())?;
    let stepper = Stepper::new(scenario, grid.clone(), max_stable_dt(scenario, &grid))?;
    let dt = stepper.dt();
    let mut m = u0.into_masses();
    let mut t = 0.0;
    let mut horizon = 1.0;
    let mut prev: Option<Vec<f64>> = None;
    let normalized = |m: &[f64]| {
        let s: f64 = m.iter().sum();
        m.iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let mut residual = f64::INFINITY;
    while horizon <= MAX_STEADY_HORIZON {
        while t < horizon {
            stepper.step(&mut m);
            t += dt;
        }
        check_nonnegative(&m, t)?;
        let cur = normalized(&m);
        if let Some(p) = &prev {
            residual = cur.iter().zip(p).map(|(a, b)| (a - b).abs()).sum();
            if residual < tol {
                let density = GridDensity::new(grid, cur)?;
                return Ok(SteadyState { density, horizon, residual });
            }
        }
        prev = Some(cur);
        horizon *= 2.0;
    }
    Err(PdeError::NoConvergence { horizon: horizon / 2.0, residual })
}

/// Stationary solution of the discrete balance (transport plus loss equals
/// jump gain), by iterating `m <- D^-1 P(kappa m)` with `D` the bidiagonal
/// transport-and-loss operator and `kappa` the cell-averaged hazard.
pub fn balance_solve(scenario: &ScenarioSpec, grid: Arc<Grid>, tol: f64, max_iter: usize) -> Result<SteadyState, PdeError> {
    let dyn_ = &scenario.dynamics;
    let n = grid.n();
    let breaks = dyn_.hazard.breakpoints();
    let kappa: Vec<f64> = (0..n)
        .map(|i| gauss_legendre10_split(|x| dyn_.phi(x), grid.left(i), grid.right(i), &breaks) / grid.width(i))
        .collect();
    let growth = dyn_.orientation() == Orientation::Growth;
    let rate: Vec<f64> = (0..n)
        .map(|i| dyn_.g(if growth { grid.right(i) } else { grid.left(i) }).abs() / grid.width(i))
        .collect();
    let jump = build_jump(&scenario.reset, dyn_, grid.clone());
    let mut m = initial_density(scenario, grid.clone())?.into_masses();
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let killed: Vec<f64> = m.iter().zip(&kappa).map(|(a, k)| a * k).collect();
        let (src, _) = jump.apply_masses(&killed);
        let mut next = vec![0.0; n];
        let mut inflow = 0.0;
        let order: Box<dyn Iterator<Item = usize>> = if growth { Box::new(0..n) } else { Box::new((0..n).rev()) };
        for i in order {
            next[i] = (inflow + src[i]) / (rate[i] + kappa[i]);
            inflow = rate[i] * next[i];
        }
        let s: f64 = next.iter().sum();
        if !(s > 0.0) {
            return Err(PdeError::NoConvergence { horizon: it as f64, residual });
        }
        next.iter_mut().for_each(|x| *x /= s);
        residual = next.iter().zip(&m).map(|(a, b)| (a - b).abs()).sum();
        m = next;
        if residual < tol {
            let density = GridDensity::new(grid, m)?;
            return Ok(SteadyState { density, horizon: f64::NAN, residual });
        }
    }
    Err(PdeError::NoConvergence { horizon: f64::NAN, residual })
}
