use serde::{Deserialize, Serialize};

use crate::model::{Dynamics, Orientation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    PerEvent,
    TimeWeighted,
}

/// Binned estimate of a density. After normalization the in-range masses sum
/// to one and `outside` holds the fraction of weight that fell outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramDensity {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub weight_kind: WeightKind,
    pub outside: f64,
}

impl HistogramDensity {
    pub fn empty(edges: Vec<f64>, weight_kind: WeightKind) -> Self {
        assert!(edges.len() >= 2 && edges.windows(2).all(|w| w[0] < w[1]), "bin edges must increase");
        let n = edges.len() - 1;
        Self { edges, masses: vec![0.0; n], weight_kind, outside: 0.0 }
    }

    fn bin(&self, x: f64) -> Option<usize> {
        let n = self.masses.len();
        if !(x >= self.edges[0] && x < self.edges[n]) {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= x) - 1)
    }

    pub fn add_point(&mut self, x: f64, w: f64) {
        match self.bin(x) {
            Some(k) => self.masses[k] += w,
            None => self.outside += w,
        }
    }

    /// Add the time a flow segment from `x` of length `duration` spends in
    /// each bin, computed exactly from the flow's travel times.
    pub fn add_segment(&mut self, dynamics: &Dynamics, x: f64, duration: f64) {
        if !(duration > 0.0) {
            return;
        }
        let y = dynamics.flow_map(duration, x);
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let n = self.masses.len();
        let (e0, en) = (self.edges[0], self.edges[n]);
        let mut inside = 0.0;
        if hi > e0 && lo < en {
            let start = self.edges.partition_point(|&e| e <= lo.max(e0)).saturating_sub(1);
            for k in start..n {
                let (a, b) = (self.edges[k], self.edges[k + 1]);
                if a >= hi {
                    break;
                }
                let (p, q) = (a.max(lo), b.min(hi));
                if q <= p {
                    continue;
                }
                let dt = match dynamics.orientation() {
                    Orientation::Growth => dynamics.travel_time(p, q),
                    Orientation::Decay => dynamics.travel_time(q, p),
                };
                if dt.is_finite() && dt > 0.0 {
                    self.masses[k] += dt;
                    inside += dt;
                }
            }
        }
        self.outside += (duration - inside).max(0.0);
    }

    pub fn merge(&mut self, other: &HistogramDensity) {
        assert_eq!(self.edges, other.edges, "merging histograms with different bins");
        for (a, b) in self.masses.iter_mut().zip(&other.masses) {
            *a += b;
        }
        self.outside += other.outside;
    }

    pub fn normalized(mut self) -> Self {
        let inside: f64 = self.masses.iter().sum();
        let total = inside + self.outside;
        if inside > 0.0 {
            for m in &mut self.masses {
                *m /= inside;
            }
        }
        self.outside = if total > 0.0 { self.outside / total } else { 0.0 };
        self
    }

    /// Density values per bin.
    pub fn densities(&self) -> Vec<f64> {
        self.masses.iter().enumerate().map(|(k, m)| m / (self.edges[k + 1] - self.edges[k])).collect()
    }

    /// L1 distance to reference bin masses, plus reference mass outside the bins.
    pub fn l1_to_masses(&self, reference: &[f64], reference_outside: f64) -> f64 {
        self.masses.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum::<f64>() + reference_outside
    }
}
