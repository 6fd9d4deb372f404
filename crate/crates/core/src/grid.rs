//! Cell grids on a truncation `[x_min, x_max]` and densities stored as cell masses.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::gauss_legendre10_split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Uniform,
    /// Geometrically spaced edges.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: GridKind,
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("density has no mass to normalize")]
    ZeroMass,
    #[error("grids differ")]
    Mismatch,
    #[error("negative or non-finite mass {value} in cell {cell}")]
    BadMass { cell: usize, value: f64 },
}

impl GridSpec {
    pub fn new(kind: GridKind, n: usize, x_min: f64, x_max: f64) -> Self {
        Self { kind, n, x_min, x_max }
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn build(&self) -> Result<Arc<Grid>, GridError> {
        Grid::new(*self).map(Arc::new)
    }
}

/// Cell edges `x_0 < .. < x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub spec: GridSpec,
    edges: Vec<f64>,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self, GridError> {
        let GridSpec { kind, n, x_min, x_max } = spec;
        if n < 1 || !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(GridError::Invalid(format!("need n >= 1 and finite x_min < x_max, got n={n}, [{x_min}, {x_max}]")));
        }
        let edges: Vec<f64> = match kind {
            GridKind::Uniform => (0..=n).map(|i| x_min + (x_max - x_min) * (i as f64 / n as f64)).collect(),
            GridKind::Log => {
                if !(x_min > 0.0) {
                    return Err(GridError::Invalid("log grid needs x_min > 0".into()));
                }
                let r = (x_max / x_min).ln();
                (0..=n).map(|i| x_min * (r * i as f64 / n as f64).exp()).collect()
            }
        };
        let mut edges = edges;
        edges[0] = x_min;
        edges[n] = x_max;
        Ok(Self { spec, edges })
    }

    /// Grid with explicitly given edges.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self, GridError> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(GridError::Invalid("edges must be strictly increasing".into()));
        }
        let n = edges.len() - 1;
        let spec = GridSpec { kind: GridKind::Uniform, n, x_min: edges[0], x_max: edges[n] };
        Ok(Self { spec, edges })
    }

    pub fn n(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn x_min(&self) -> f64 {
        self.edges[0]
    }

    pub fn x_max(&self) -> f64 {
        self.edges[self.n()]
    }

    pub fn left(&self, i: usize) -> f64 {
        self.edges[i]
    }

    pub fn right(&self, i: usize) -> f64 {
        self.edges[i + 1]
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.center(i)).collect()
    }

    pub fn min_width(&self) -> f64 {
        (0..self.n()).map(|i| self.width(i)).fold(f64::INFINITY, f64::min)
    }

    /// Cell containing `x` (right edge belongs to the last cell).
    pub fn locate(&self, x: f64) -> Option<usize> {
        let n = self.n();
        if !(x >= self.edges[0] && x <= self.edges[n]) {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= x);
        Some(i.saturating_sub(1).min(n - 1))
    }

    /// Integrals of `f` over each cell, split at `breaks`.
    pub fn cell_integrals(&self, f: &dyn Fn(f64) -> f64, breaks: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| gauss_legendre10_split(f, self.left(i), self.right(i), breaks)).collect()
    }
}

/// Mass that left the truncation through its lower or upper edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Leakage {
    pub below: f64,
    pub above: f64,
}

impl Leakage {
    pub fn total(&self) -> f64 {
        self.below + self.above
    }
}

impl std::ops::Add for Leakage {
    type Output = Leakage;
    fn add(self, o: Leakage) -> Leakage {
        Leakage { below: self.below + o.below, above: self.above + o.above }
    }
}

impl std::ops::AddAssign for Leakage {
    fn add_assign(&mut self, o: Leakage) {
        self.below += o.below;
        self.above += o.above;
    }
}

/// Nonnegative density stored as masses per grid cell, with a running ledger
/// of mass that was mapped outside the truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Arc<Grid>,
    masses: Vec<f64>,
    pub leakage: Leakage,
}

impl GridDensity {
    pub fn new(grid: Arc<Grid>, masses: Vec<f64>) -> Result<Self, GridError> {
        if masses.len() != grid.n() {
            return Err(GridError::Mismatch);
        }
        if let Some((cell, &value)) = masses.iter().enumerate().find(|(_, m)| !(**m >= 0.0 && m.is_finite())) {
            return Err(GridError::BadMass { cell, value });
        }
        Ok(Self { grid, masses, leakage: Leakage::default() })
    }

    /// Construct without validation; callers guarantee nonnegative finite masses.
    pub(crate) fn from_parts(grid: Arc<Grid>, masses: Vec<f64>, leakage: Leakage) -> Self {
        debug_assert_eq!(masses.len(), grid.n());
        Self { grid, masses, leakage }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n();
        Self { grid, masses: vec![0.0; n], leakage: Leakage::default() }
    }

    /// Uniform in `x` on the truncation, total mass one.
    pub fn uniform(grid: Arc<Grid>) -> Self {
        let span = grid.x_max() - grid.x_min();
        let masses = (0..grid.n()).map(|i| grid.width(i) / span).collect();
        Self { grid, masses, leakage: Leakage::default() }
    }

    /// Equal mass in every cell.
    pub fn equal_cells(grid: Arc<Grid>) -> Self {
        let n = grid.n();
        Self { grid, masses: vec![1.0 / n as f64; n], leakage: Leakage::default() }
    }

    /// Unit mass in the cell containing `x`.
    pub fn point_mass(grid: Arc<Grid>, x: f64) -> Result<Self, GridError> {
        let i = grid.locate(x).ok_or_else(|| GridError::Invalid(format!("point {x} outside the grid")))?;
        let mut d = Self::zeros(grid);
        d.masses[i] = 1.0;
        Ok(d)
    }

    /// Cell integrals of a pointwise density (not renormalized).
    pub fn from_density_fn(grid: Arc<Grid>, f: &dyn Fn(f64) -> f64, breaks: &[f64]) -> Self {
        let masses = grid.cell_integrals(f, breaks).into_iter().map(|m| m.max(0.0)).collect();
        Self { grid, masses, leakage: Leakage::default() }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn masses_mut(&mut self) -> &mut [f64] {
        &mut self.masses
    }

    pub fn into_masses(self) -> Vec<f64> {
        self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Density values `mass / width` per cell.
    pub fn density_values(&self) -> Vec<f64> {
        self.masses.iter().enumerate().map(|(i, m)| m / self.grid.width(i)).collect()
    }

    /// Rescaled copy with unit interior mass; the ledger is scaled alike.
    pub fn normalized(&self) -> Result<Self, GridError> {
        let m = self.total_mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(GridError::ZeroMass);
        }
        Ok(self.scaled(1.0 / m))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            masses: self.masses.iter().map(|m| m * c).collect(),
            leakage: Leakage { below: self.leakage.below * c, above: self.leakage.above * c },
        }
    }

    /// Discrete L1 distance `sum |m_i - m'_i|` on a shared grid.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64, GridError> {
        if self.grid.edges() != other.grid.edges() {
            return Err(GridError::Mismatch);
        }
        Ok(self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum())
    }

    /// L1 distance to reference cell masses plus the reference mass lying
    /// outside the truncation (`outside`).
    pub fn l1_to_masses(&self, reference: &[f64], outside: f64) -> f64 {
        self.masses.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum::<f64>() + outside
    }

    /// Redistribute masses onto bins with the given edges, assuming a flat
    /// density inside each cell. Mass outside the new edges is dropped.
    pub fn rebin(&self, edges: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; edges.len().saturating_sub(1)];
        let g = &self.grid;
        let mut k = 0;
        for i in 0..g.n() {
            let (a, b) = (g.left(i), g.right(i));
            let w = b - a;
            while k + 1 < edges.len() && edges[k + 1] <= a {
                k += 1;
            }
            let mut j = k;
            while j + 1 < edges.len() && edges[j] < b {
                let lo = a.max(edges[j]);
                let hi = b.min(edges[j + 1]);
                if hi > lo {
                    out[j] += self.masses[i] * (hi - lo) / w;
                }
                j += 1;
            }
        }
        out
    }
}
