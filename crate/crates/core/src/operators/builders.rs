//! Construction of structured transfer matrices from model data.

use rayon::prelude::*;

use super::structured::{Column, Columns, DeterministicChain, Direction, GridOperator, SemiSeparable};
use crate::grid::Grid;
use crate::model::{BurstLaw, DeterministicReset, Dynamics, FractionLaw, Orientation, ResetKernel};
use crate::numeric::{gauss_legendre10_nodes, Quadrature};

/// Gauss nodes over `[a, b]`, split at `breaks` and into `pieces` equal parts.
pub(crate) fn cell_nodes(a: f64, b: f64, breaks: &[f64], pieces: usize) -> Vec<(f64, f64)> {
    let mut pts = vec![a];
    for k in 1..pieces {
        pts.push(a + (b - a) * k as f64 / pieces as f64);
    }
    pts.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out = Vec::with_capacity(10 * (pts.len() - 1));
    for w in pts.windows(2) {
        out.extend_from_slice(&gauss_legendre10_nodes(w[0], w[1]));
    }
    out
}

/// Number of sub-pieces so that a potential rising by `delta` over a cell is
/// resolved by the Gauss rule.
fn pieces_for(delta: f64) -> usize {
    if delta.is_finite() {
        (delta.abs().ceil() as usize).clamp(1, 64)
    } else {
        64
    }
}

/// What the occupation kernel integrates against the survival weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OccupationWeight {
    /// `phi(x) / |g(x)|`: distribution of the next jump level.
    Hazard,
    /// `1 / |g(x)|`: time spent per unit length.
    Time,
}

/// Kernel `f(x) exp(Psi(y) - Psi(x))` for `x` downstream of `y`, with
/// `Psi = lambda G + Q`, integrated against cell-flat sources.
pub fn occupation_operator(dynamics: &Dynamics, grid: &Grid, lambda: f64, weight: OccupationWeight) -> SemiSeparable {
    let n = grid.n();
    let dir = match dynamics.orientation() {
        Orientation::Growth => Direction::Up,
        Orientation::Decay => Direction::Down,
    };
    let psi = |x: f64| dynamics.q_lambda(lambda, x);
    let f = |x: f64| match weight {
        OccupationWeight::Hazard => dynamics.phi(x) / dynamics.g(x).abs(),
        OccupationWeight::Time => 1.0 / dynamics.g(x).abs(),
    };
    let breaks = dynamics.hazard.breakpoints();
    // Travel-order cell k covers x-cell `ix(k)` from `entry(k)` to `entry(k+1)`.
    let ix = |k: usize| if dir == Direction::Up { k } else { n - 1 - k };
    let edge = |k: usize| if dir == Direction::Up { grid.edges()[k] } else { grid.edges()[n - k] };
    let psi_edges: Vec<f64> = (0..=n).into_par_iter().map(|k| psi(edge(k))).collect();
    let closed = lambda == 0.0 && weight == OccupationWeight::Hazard;

    let per_cell: Vec<(f64, f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let i = ix(k);
            let (a, b) = (grid.left(i), grid.right(i));
            let h = b - a;
            let (p_in, p_out) = (psi_edges[k], psi_edges[k + 1]);
            let rho = (-(p_out - p_in)).exp();
            let nodes = cell_nodes(a, b, &breaks, pieces_for(p_out - p_in));
            let exit_edge = edge(k + 1);
            let w = nodes.iter().map(|&(y, wt)| wt * (psi(y) - p_out).exp()).sum::<f64>() / h;
            if closed {
                let u = -(-(p_out - p_in)).exp_m1();
                let d = nodes.iter().map(|&(y, wt)| -wt * (psi(y) - p_out).exp_m1()).sum::<f64>() / h;
                return (u, w, rho, d);
            }
            let u = nodes.iter().map(|&(x, wt)| wt * f(x) * (p_in - psi(x)).exp()).sum::<f64>();
            let d = nodes
                .iter()
                .map(|&(y, wt)| {
                    let py = psi(y);
                    let (lo, hi) = if y < exit_edge { (y, exit_edge) } else { (exit_edge, y) };
                    let dp = (p_out - py).abs();
                    let inner: f64 = cell_nodes(lo, hi, &breaks, pieces_for(dp))
                        .iter()
                        .map(|&(x, wx)| wx * f(x) * (py - psi(x)).exp())
                        .sum();
                    wt * inner
                })
                .sum::<f64>()
                / h;
            (u, w, rho, d)
        })
        .collect();

    let down = dynamics.domain().downstream();
    let p_last = psi_edges[n];
    let exit = if closed {
        let q_end = dynamics.q_downstream();
        -(-(q_end - p_last)).exp_m1()
    } else {
        let start = edge(n);
        let g = |x: f64| f(x) * (p_last - psi(x)).exp();
        let q = Quadrature::with_tolerances(1e-13, 1e-9);
        match q.integrate_with_breaks(g, start, down, &breaks) {
            Ok(r) => r.value.abs(),
            Err(_) => f64::INFINITY,
        }
    };
    SemiSeparable {
        direction: dir,
        u: per_cell.iter().map(|c| c.0).collect(),
        w: per_cell.iter().map(|c| c.1).collect(),
        rho: per_cell.iter().map(|c| c.2).collect(),
        diag: per_cell.iter().map(|c| c.3).collect(),
        exit,
    }
}

/// Conservative remap of cell-flat sources through an increasing map whose
/// inverse sends the target edges to `pre` (one entry per grid edge).
pub fn remap_columns(grid: &Grid, pre: &[f64]) -> Columns {
    let n = grid.n();
    let edges = grid.edges();
    let cols: Vec<Column> = (0..n)
        .into_par_iter()
        .map(|j| {
            let (a, b) = (edges[j], edges[j + 1]);
            let h = b - a;
            let overlap = |lo: f64, hi: f64| -> f64 { (hi.min(b) - lo.max(a)).max(0.0) / h };
            let below = overlap(f64::NEG_INFINITY, pre[0]);
            let above = overlap(pre[n], f64::INFINITY);
            let first = pre.partition_point(|&p| p <= a).saturating_sub(1).min(n - 1);
            let mut values = Vec::new();
            let mut start = first;
            let mut k = first;
            while k < n && pre[k] < b {
                let v = overlap(pre[k], pre[k + 1]);
                if values.is_empty() && v == 0.0 {
                    start = k + 1;
                } else {
                    values.push(v);
                }
                k += 1;
            }
            Column { start: start.min(n), values, below, above }
        })
        .collect();
    Columns { n, cols }
}

/// Preimages of the grid edges under a deterministic reset.
pub fn reset_preimages(reset: &DeterministicReset, grid: &Grid, d1: f64) -> Vec<f64> {
    grid.edges()
        .iter()
        .map(|&x| {
            let p = reset.lambda(x);
            if p.is_nan() || p >= d1 {
                f64::INFINITY
            } else {
                p
            }
        })
        .collect()
}

/// Jump operator `P` on the grid.
pub fn jump_operator(reset: &ResetKernel, dynamics: &Dynamics, grid: &Grid) -> GridOperator {
    let n = grid.n();
    let e = grid.edges();
    match reset {
        ResetKernel::Deterministic(d) => {
            GridOperator::Columns(remap_columns(grid, &reset_preimages(d, grid, dynamics.domain().d1)))
        }
        ResetKernel::Multiplicative(FractionLaw::BetaPower { beta }) => {
            let beta = *beta;
            // Travel order runs down in x; cell k of travel is x-cell n-1-k.
            let mut u = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            let mut rho = Vec::with_capacity(n);
            let mut diag = Vec::with_capacity(n);
            for k in 0..n {
                let i = n - 1 - k;
                let (a, b) = (e[i], e[i + 1]);
                let lr = ((b - a) / a).ln_1p();
                let r = (-beta * lr).exp();
                // Average of (a / y)^beta over the cell.
                let avg = if (beta - 1.0).abs() < 1e-12 {
                    lr / (b / a - 1.0)
                } else {
                    ((1.0 - beta) * lr).exp_m1() / ((1.0 - beta) * (b / a - 1.0))
                };
                u.push(-(-beta * lr).exp_m1());
                w.push(avg);
                rho.push(r);
                diag.push(1.0 - avg);
            }
            GridOperator::SemiSeparable(SemiSeparable { direction: Direction::Down, u, w, rho, diag, exit: 1.0 })
        }
        ResetKernel::AdditiveBurst(BurstLaw::Exponential { mean }) => {
            let m = *mean;
            let mut u = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            let mut rho = Vec::with_capacity(n);
            let mut diag = Vec::with_capacity(n);
            for i in 0..n {
                let h = e[i + 1] - e[i];
                let r = -(-h / m).exp_m1();
                let avg = m * r / h;
                u.push(r);
                w.push(avg);
                rho.push((-h / m).exp());
                diag.push(1.0 - avg);
            }
            GridOperator::SemiSeparable(SemiSeparable { direction: Direction::Up, u, w, rho, diag, exit: 1.0 })
        }
        ResetKernel::Multiplicative(law) => {
            let law = law.clone();
            GridOperator::Columns(cdf_columns(grid, move |target: f64, y: f64| law.cdf(target / y)))
        }
        ResetKernel::AdditiveBurst(law) => {
            let law = law.clone();
            GridOperator::Columns(cdf_columns(grid, move |target: f64, y: f64| law.cdf(target - y)))
        }
    }
}

/// Dense columns from `C(x, y)`, the probability that a jump from `y` lands
/// below `x`.
fn cdf_columns<C: Fn(f64, f64) -> f64 + Sync>(grid: &Grid, c: C) -> Columns {
    let n = grid.n();
    let e = grid.edges();
    let cols = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = e[j + 1] - e[j];
            let mut acc = vec![0.0; n + 1];
            for (y, wt) in gauss_legendre10_nodes(e[j], e[j + 1]) {
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += wt * c(e[k], y);
                }
            }
            for a in &mut acc {
                *a /= h;
            }
            let values: Vec<f64> = (0..n).map(|k| (acc[k + 1] - acc[k]).max(0.0)).collect();
            let start = values.iter().position(|&v| v > 0.0).unwrap_or(n);
            let stop = values.iter().rposition(|&v| v > 0.0).map_or(start, |p| p + 1);
            Column { start, values: values[start..stop].to_vec(), below: acc[0], above: (1.0 - acc[n]).max(0.0) }
        })
        .collect();
    Columns { n, cols }
}

/// Closed jump chain `K = P phi R_0` for a deterministic reset.
pub fn deterministic_chain(dynamics: &Dynamics, reset: &DeterministicReset, grid: std::sync::Arc<Grid>) -> DeterministicChain {
    let n = grid.n();
    let e = grid.edges().to_vec();
    let breaks = dynamics.hazard.breakpoints();
    let q_edges: Vec<f64> = e.par_iter().map(|&x| dynamics.q(x)).collect();
    let partial_integral = |a: f64, b: f64, q_ref: f64| -> f64 {
        // int_a^b exp(Q(y) - q_ref) dy
        let dq = q_ref - dynamics.q(a);
        cell_nodes(a, b, &breaks, pieces_for(dq)).iter().map(|&(y, wt)| wt * (dynamics.q(y) - q_ref).exp()).sum::<f64>()
    };
    let w: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| partial_integral(e[j], e[j + 1], q_edges[j + 1]) / (e[j + 1] - e[j]))
        .collect();
    let pre = reset_preimages(reset, &grid, dynamics.domain().d1);
    let pre_info: Vec<(f64, Option<usize>, f64)> = pre
        .par_iter()
        .map(|&p| {
            if p == f64::INFINITY {
                return (f64::INFINITY, None, 0.0);
            }
            let qp = dynamics.q(p);
            if p <= e[0] || p > e[n] {
                return (qp, None, 0.0);
            }
            let c = grid.locate(p).expect("inside grid");
            let h = e[c + 1] - e[c];
            let partial = ((e[c + 1] - p) + partial_integral(e[c], p, qp)) / h;
            (qp, Some(c), partial)
        })
        .collect();
    DeterministicChain { grid, q_edges, w, pre, pre_info, q_end: dynamics.q_downstream() }
}
