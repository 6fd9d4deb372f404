use super::builders::{occupation_operator, OccupationWeight};
use super::kernel::KernelMatrix;
use super::OperatorError;
use crate::grid::{GridDensity, GridError};
use crate::model::Dynamics;
use crate::numeric::Quadrature;

#[derive(Debug, Clone)]
pub struct InvariantOptions {
    /// Stop when `|| K v / |K v| - v ||_1` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Window for the geometric decay test.
    pub decay_window: usize,
    /// Per-step mass factor below which the iterate counts as decaying.
    pub decay_threshold: f64,
    /// Starting masses; uniform in `x` when `None`.
    pub start: Option<Vec<f64>>,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200_000, decay_window: 50, decay_threshold: 1.0 - 1e-6, start: None }
    }
}

#[derive(Debug, Clone)]
pub struct InvariantResult {
    pub density: GridDensity,
    pub iterations: usize,
    pub residual: f64,
    /// Interior mass of `K v` for the final normalized `v`.
    pub mass_factor: f64,
    /// Leakage of `K v` for the final normalized `v`.
    pub leak: f64,
}

/// Power iteration with L1 normalization.
///
/// Reports [`OperatorError::NoInvariant`] when the unnormalized iterate loses
/// mass geometrically: either the converged mass factor is below the decay
/// threshold, or it has been below it and steady (spread under 1% of the
/// loss) over a full window.
pub fn invariant_density(k: &KernelMatrix, opts: &InvariantOptions) -> Result<InvariantResult, OperatorError> {
    let grid = k.grid().clone();
    let n = grid.n();
    let mut v: Vec<f64> = match &opts.start {
        Some(s) if s.len() == n => s.clone(),
        Some(_) => return Err(GridError::Mismatch.into()),
        None => GridDensity::uniform(grid.clone()).into_masses(),
    };
    let m0: f64 = v.iter().sum();
    if !(m0 > 0.0) {
        return Err(GridError::ZeroMass.into());
    }
    v.iter_mut().for_each(|x| *x /= m0);
    let mut factors: Vec<f64> = Vec::with_capacity(opts.decay_window);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let (kv, leak) = k.apply_masses(&v);
        let mass: f64 = kv.iter().sum();
        if !(mass > 0.0) {
            return Err(OperatorError::NoInvariant { decay_factor: 0.0, iterations: it });
        }
        residual = kv.iter().zip(&v).map(|(a, b)| (a / mass - b).abs()).sum();
        v = kv.into_iter().map(|x| x / mass).collect();
        if factors.len() == opts.decay_window {
            factors.remove(0);
        }
        factors.push(mass);
        if residual < opts.tol {
            if mass < opts.decay_threshold {
                return Err(OperatorError::NoInvariant { decay_factor: mass, iterations: it });
            }
            let density = GridDensity::new(grid, v)?;
            return Ok(InvariantResult { density, iterations: it, residual, mass_factor: mass, leak: leak.total() });
        }
        if factors.len() == opts.decay_window {
            let hi = factors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = factors.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = factors.iter().sum::<f64>() / factors.len() as f64;
            if hi < opts.decay_threshold && hi - lo < 0.01 * (1.0 - mean) {
                return Err(OperatorError::NoInvariant { decay_factor: mean, iterations: it });
            }
        }
    }
    Err(OperatorError::MaxIterExceeded { iterations: opts.max_iter, residual })
}

/// Continuous-time stationary density `R_0 v / |R_0 v|` from an invariant
/// density of the jump chain.
///
/// Fails with [`OperatorError::NotIntegrable`] when the image has no mass or
/// when widening the truncation (doubling toward the downstream end) adds
/// more than 10% to its mass.
pub fn lift_to_continuous(dynamics: &Dynamics, v_star: &GridDensity) -> Result<GridDensity, OperatorError> {
    let grid = v_star.grid().clone();
    let op = occupation_operator(dynamics, &grid, 0.0, OccupationWeight::Time);
    let (out, far) = op.apply(v_star.masses());
    let mass: f64 = out.iter().sum();
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(OperatorError::NotIntegrable(format!("lifted mass is {mass}")));
    }
    // Mass between the exit edge and the widened end, per unit of the
    // carried-over state `far / exit`.
    let domain = dynamics.domain();
    let down = domain.downstream();
    let (edge, wide) = if down > grid.x_max() {
        let wide = if down.is_finite() { 0.5 * (grid.x_max() + down) } else { 2.0 * grid.x_max() };
        (grid.x_max(), wide)
    } else {
        (grid.x_min(), if down > -f64::INFINITY && grid.x_min() > down { 0.5 * (grid.x_min() + down) } else { grid.x_min() })
    };
    let extra = if op.exit > 0.0 && op.exit.is_finite() {
        let carried = far / op.exit;
        let q0 = dynamics.q(edge);
        let f = |x: f64| (q0 - dynamics.q(x)).exp() / dynamics.g(x).abs();
        let quad = Quadrature::with_tolerances(1e-14, 1e-9);
        let part = quad.integrate_with_breaks(f, edge, wide, &dynamics.hazard.breakpoints()).map(|r| r.value.abs());
        match part {
            Ok(p) => carried * p,
            Err(_) => f64::INFINITY,
        }
    } else if op.exit.is_infinite() && far > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if !(extra <= 0.1 * mass) {
        return Err(OperatorError::NotIntegrable(format!(
            "mass {mass:.6e} on the truncation grows by {extra:.6e} when it is widened to {wide}"
        )));
    }
    let mut d = GridDensity::new(grid, out)?;
    d = d.normalized()?;
    Ok(d)
}
