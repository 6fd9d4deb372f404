//! Structured representations of cell-to-cell transfer matrices. All act on
//! vectors of cell masses in increasing-`x` order and report the mass they
//! send past either end of the grid.

use std::sync::Arc;

use crate::grid::{Grid, Leakage};

/// Which way mass moves in a one-sided (Volterra-type) operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Targets lie at or above the source.
    Up,
    /// Targets lie at or below the source.
    Down,
}

/// One-sided semiseparable matrix. In travel order `k = 0..N` (increasing `x`
/// for [`Direction::Up`]), the entry from source `j` to target `i > j` is
/// `u_i * rho_(j+1) * .. * rho_(i-1) * w_j`, the diagonal is `d_j`, and a
/// virtual cell past the far end receives `exit * (..) * w_j`.
#[derive(Debug, Clone)]
pub struct SemiSeparable {
    pub direction: Direction,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub rho: Vec<f64>,
    pub diag: Vec<f64>,
    pub exit: f64,
}

impl SemiSeparable {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    fn to_travel(&self, v: &[f64]) -> Vec<f64> {
        match self.direction {
            Direction::Up => v.to_vec(),
            Direction::Down => v.iter().rev().copied().collect(),
        }
    }

    fn back_from_travel(&self, mut v: Vec<f64>) -> Vec<f64> {
        if self.direction == Direction::Down {
            v.reverse();
        }
        v
    }

    /// Returns the image and the mass sent past the far end.
    pub fn apply(&self, v: &[f64]) -> (Vec<f64>, f64) {
        let vt = self.to_travel(v);
        let n = self.n();
        let mut out = vec![0.0; n];
        let mut s = 0.0;
        for k in 0..n {
            out[k] = self.diag[k] * vt[k] + self.u[k] * s;
            s = self.rho[k] * s + self.w[k] * vt[k];
        }
        // After the loop `s` carries the factor up to the virtual cell.
        (self.back_from_travel(out), self.exit * s)
    }

    /// `A^T y` where `y_exit` weights the virtual cell.
    pub fn apply_transpose_with_exit(&self, y: &[f64], y_exit: f64) -> Vec<f64> {
        let yt = self.to_travel(y);
        let n = self.n();
        let mut out = vec![0.0; n];
        // c_j = sum over targets downstream of j of u_i y_i times the rho product.
        let mut c = self.exit * y_exit;
        for j in (0..n).rev() {
            out[j] = self.diag[j] * yt[j] + self.w[j] * c;
            c = self.u[j] * yt[j] + self.rho[j] * c;
        }
        self.back_from_travel(out)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let n = self.n();
        let (it, jt) = match self.direction {
            Direction::Up => (i, j),
            Direction::Down => (n - 1 - i, n - 1 - j),
        };
        if it < jt {
            return 0.0;
        }
        if it == jt {
            return self.diag[jt];
        }
        let mut p = self.w[jt];
        for m in jt + 1..it {
            p *= self.rho[m];
        }
        p * self.u[it]
    }
}

/// Column-compressed matrix: each source column stores a contiguous run of
/// target values plus its leakage.
#[derive(Debug, Clone)]
pub struct Columns {
    pub n: usize,
    pub cols: Vec<Column>,
}

#[derive(Debug, Clone, Default)]
pub struct Column {
    pub start: usize,
    pub values: Vec<f64>,
    pub below: f64,
    pub above: f64,
}

impl Columns {
    pub fn apply(&self, v: &[f64]) -> (Vec<f64>, Leakage) {
        let mut out = vec![0.0; self.n];
        let mut leak = Leakage::default();
        for (c, &vj) in self.cols.iter().zip(v) {
            if vj == 0.0 {
                continue;
            }
            for (k, &a) in c.values.iter().enumerate() {
                out[c.start + k] += a * vj;
            }
            leak.below += c.below * vj;
            leak.above += c.above * vj;
        }
        (out, leak)
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .map(|c| c.values.iter().enumerate().map(|(k, a)| a * y[c.start + k]).sum())
            .collect()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let c = &self.cols[j];
        if i >= c.start && i < c.start + c.values.len() {
            c.values[i - c.start]
        } else {
            0.0
        }
    }
}

/// Jump chain of a deterministic reset, expressed through the pre-jump
/// survival functional. For a source density flat on each cell, `F_j(a)` is
/// the probability that a level started in cell `j` is still unjumped at
/// level `a`; target cell `k` receives `F_j(p_k) - F_j(p_(k+1))` where `p` are
/// the preimages of the target edges under the reset.
#[derive(Debug, Clone)]
pub struct DeterministicChain {
    pub grid: Arc<Grid>,
    /// `Q` at the grid edges.
    pub q_edges: Vec<f64>,
    /// Cell averages of `exp(Q(y) - Q(right edge))`.
    pub w: Vec<f64>,
    /// Preimages of the grid edges.
    pub pre: Vec<f64>,
    /// For each preimage: (`Q(p)`, cell containing `p` or `None`, partial
    /// survival of the containing cell's own mass).
    pub pre_info: Vec<(f64, Option<usize>, f64)>,
    /// `Q` at the downstream endpoint.
    pub q_end: f64,
}

impl DeterministicChain {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// Survival functional `Gamma(a) = sum_j v_j F_j(a)` at the preimage `k`,
    /// given the prefix sums `acc` (scaled at the left edge of each cell) and
    /// suffix sums `tail` of `v`.
    fn gamma_at(&self, k: usize, v: &[f64], acc: &[f64], tail: &[f64], total: f64) -> f64 {
        let n = self.n();
        let (qa, cell, partial) = self.pre_info[k];
        let a = self.pre[k];
        if a <= self.grid.x_min() {
            return total;
        }
        match cell {
            Some(c) => {
                let full = acc[c] * (-(qa - self.q_edges[c])).exp();
                full + v[c] * partial + tail[c]
            }
            None => {
                if qa == f64::INFINITY {
                    0.0
                } else {
                    acc[n] * (-(qa - self.q_edges[n])).exp()
                }
            }
        }
    }

    fn prefix(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let n = self.n();
        let mut acc = vec![0.0; n + 1];
        for c in 0..n {
            acc[c + 1] = acc[c] * (-(self.q_edges[c + 1] - self.q_edges[c])).exp() + v[c] * self.w[c];
        }
        let mut tail = vec![0.0; n];
        let mut s = 0.0;
        for c in (0..n).rev() {
            tail[c] = s;
            s += v[c];
        }
        (acc, tail, s)
    }

    /// Image, truncation leakage and the mass that never jumps.
    pub fn apply(&self, v: &[f64]) -> (Vec<f64>, Leakage, f64) {
        let n = self.n();
        let (acc, tail, total) = self.prefix(v);
        let gam: Vec<f64> = (0..=n).map(|k| self.gamma_at(k, v, &acc, &tail, total)).collect();
        let out: Vec<f64> = (0..n).map(|k| (gam[k] - gam[k + 1]).max(0.0)).collect();
        let never = if self.q_end == f64::INFINITY { 0.0 } else { acc[n] * (-(self.q_end - self.q_edges[n])).exp() };
        let leak = Leakage { below: (total - gam[0]).max(0.0), above: (gam[n] - never).max(0.0) };
        (out, leak, never)
    }

    /// `F_j` at preimage `k`.
    fn survival(&self, j: usize, k: usize) -> f64 {
        let (qa, cell, partial) = self.pre_info[k];
        if self.pre[k] <= self.grid.x_min() {
            return 1.0;
        }
        match cell {
            Some(c) if j > c => 1.0,
            Some(c) if j == c => partial,
            _ => {
                if qa == f64::INFINITY {
                    0.0
                } else {
                    self.w[j] * (-(qa - self.q_edges[j + 1])).exp()
                }
            }
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        (self.survival(j, i) - self.survival(j, i + 1)).max(0.0)
    }

    /// Per-column (below, above, never-jumping) fractions.
    pub fn column_fates(&self, j: usize) -> (f64, f64, f64) {
        let n = self.n();
        let f0 = self.survival(j, 0);
        let f_n = self.survival(j, n);
        let never = if self.q_end == f64::INFINITY { 0.0 } else { self.w[j] * (-(self.q_end - self.q_edges[j + 1])).exp() };
        (1.0 - f0, (f_n - never).max(0.0), never)
    }
}

/// Any transfer matrix used by the operators module.
#[derive(Debug, Clone)]
pub enum GridOperator {
    SemiSeparable(SemiSeparable),
    Columns(Columns),
    Chain(DeterministicChain),
    /// `outer * inner`.
    Composite(Box<GridOperator>, Box<GridOperator>),
}

impl GridOperator {
    pub fn n(&self) -> usize {
        match self {
            GridOperator::SemiSeparable(s) => s.n(),
            GridOperator::Columns(c) => c.n,
            GridOperator::Chain(c) => c.n(),
            GridOperator::Composite(o, _) => o.n(),
        }
    }

    /// Image of `v` and the mass sent outside the grid. Mass that is lost
    /// for good (never jumps) is not part of the leakage.
    pub fn apply(&self, v: &[f64]) -> (Vec<f64>, Leakage) {
        match self {
            GridOperator::SemiSeparable(s) => {
                let (out, far) = s.apply(v);
                let leak = match s.direction {
                    Direction::Up => Leakage { below: 0.0, above: far },
                    Direction::Down => Leakage { below: far, above: 0.0 },
                };
                (out, leak)
            }
            GridOperator::Columns(c) => c.apply(v),
            GridOperator::Chain(c) => {
                let (out, leak, _) = c.apply(v);
                (out, leak)
            }
            GridOperator::Composite(outer, inner) => {
                let (mid, l1) = inner.apply(v);
                let (out, l2) = outer.apply(&mid);
                (out, l1 + l2)
            }
        }
    }

    /// `A^T y` restricted to the grid.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        match self {
            GridOperator::SemiSeparable(s) => s.apply_transpose_with_exit(y, 0.0),
            GridOperator::Columns(c) => c.apply_transpose(y),
            GridOperator::Chain(c) => {
                let n = c.n();
                (0..n).map(|j| (0..n).map(|i| c.entry(i, j) * y[i]).sum()).collect()
            }
            GridOperator::Composite(outer, inner) => inner.apply_transpose(&outer.apply_transpose(y)),
        }
    }

    /// Per-column leakage below and above the grid.
    pub fn column_leaks(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            GridOperator::SemiSeparable(s) => {
                let n = s.n();
                let far = s.apply_transpose_with_exit(&vec![0.0; n], 1.0);
                match s.direction {
                    Direction::Up => (vec![0.0; n], far),
                    Direction::Down => (far, vec![0.0; n]),
                }
            }
            GridOperator::Columns(c) => (c.cols.iter().map(|c| c.below).collect(), c.cols.iter().map(|c| c.above).collect()),
            GridOperator::Chain(c) => {
                let n = c.n();
                let f: Vec<(f64, f64, f64)> = (0..n).map(|j| c.column_fates(j)).collect();
                (f.iter().map(|x| x.0).collect(), f.iter().map(|x| x.1).collect())
            }
            GridOperator::Composite(outer, inner) => {
                let (ib, ia) = inner.column_leaks();
                let (ob, oa) = outer.column_leaks();
                let tb = inner.apply_transpose(&ob);
                let ta = inner.apply_transpose(&oa);
                (
                    ib.iter().zip(&tb).map(|(a, b)| a + b).collect(),
                    ia.iter().zip(&ta).map(|(a, b)| a + b).collect(),
                )
            }
        }
    }

    /// Column sums inside the grid.
    pub fn column_mass(&self) -> Vec<f64> {
        self.apply_transpose(&vec![1.0; self.n()])
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            GridOperator::SemiSeparable(s) => s.entry(i, j),
            GridOperator::Columns(c) => c.entry(i, j),
            GridOperator::Chain(c) => c.entry(i, j),
            GridOperator::Composite(outer, inner) => {
                let n = inner.n();
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                let (mid, _) = inner.apply(&e);
                let (out, _) = outer.apply(&mid);
                out[i]
            }
        }
    }

    /// Dense copy, column by column (for small grids and tests).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut m = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let (col, _) = self.apply(&e);
            for i in 0..n {
                m[i][j] = col[i];
            }
        }
        m
    }
}
