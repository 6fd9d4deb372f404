use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::domain::Orientation;
use super::{Evaluator, ModelError};
use crate::numeric::{gauss_legendre10, integrate};

/// Piecewise-linear CDF of a density on `[x_0, x_M]`, built from per-interval
/// Gauss–Legendre integrals. Used to sample and integrate user densities.
#[derive(Debug, Clone)]
pub struct CdfTable {
    xs: Vec<f64>,
    cs: Vec<f64>,
}

impl CdfTable {
    pub fn build(density: &dyn Fn(f64) -> f64, xs: Vec<f64>) -> Self {
        let mut cs = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        cs.push(0.0);
        for w in xs.windows(2) {
            acc += gauss_legendre10(density, w[0], w[1]);
            cs.push(acc);
        }
        Self { xs, cs }
    }

    pub fn total(&self) -> f64 {
        *self.cs.last().unwrap_or(&0.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return self.total();
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.cs[i] + t * (self.cs[i + 1] - self.cs[i])
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let target = u * self.total();
        let i = self.cs.partition_point(|&c| c < target).clamp(1, self.cs.len() - 1);
        let (c0, c1) = (self.cs[i - 1], self.cs[i]);
        let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.5 };
        self.xs[i - 1] + t * (self.xs[i] - self.xs[i - 1])
    }
}

/// Deterministic reset `x -> sigma(x)` with inverse `lambda`.
#[derive(Clone)]
pub enum DeterministicReset {
    /// `sigma(x) = c x`, `0 < c < 1`.
    Scale { c: f64 },
    Custom { name: String, sigma: Evaluator, lambda: Evaluator, dlambda: Evaluator },
}

impl DeterministicReset {
    pub fn sigma(&self, x: f64) -> f64 {
        match self {
            DeterministicReset::Scale { c } => c * x,
            DeterministicReset::Custom { sigma, .. } => sigma(x),
        }
    }

    /// Inverse of `sigma`.
    pub fn lambda(&self, y: f64) -> f64 {
        match self {
            DeterministicReset::Scale { c } => y / c,
            DeterministicReset::Custom { lambda, .. } => lambda(y),
        }
    }

    /// Derivative of the inverse.
    pub fn dlambda(&self, y: f64) -> f64 {
        match self {
            DeterministicReset::Scale { c } => 1.0 / c,
            DeterministicReset::Custom { dlambda, .. } => dlambda(y),
        }
    }

    /// `sigma'(x) = 1 / lambda'(sigma(x))`.
    pub fn dsigma(&self, x: f64) -> f64 {
        match self {
            DeterministicReset::Scale { c } => *c,
            _ => 1.0 / self.dlambda(self.sigma(x)),
        }
    }
}

/// Law of the retained fraction in a multiplicative reset, a density on (0, 1).
#[derive(Clone)]
pub enum FractionLaw {
    /// `psi(z) = beta z^(beta - 1)`.
    BetaPower { beta: f64 },
    /// Piecewise-constant density on equal bins of (0, 1).
    Histogram { weights: Vec<f64> },
    Custom { name: String, psi: Evaluator, table: Arc<CdfTable> },
}

impl FractionLaw {
    pub fn custom(name: &str, psi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let psi: Evaluator = Arc::new(psi);
        let m = 4096;
        let xs: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        let table = Arc::new(CdfTable::build(&*psi, xs));
        FractionLaw::Custom { name: name.to_string(), psi, table }
    }

    pub fn density(&self, z: f64) -> f64 {
        if !(z > 0.0 && z < 1.0) {
            return 0.0;
        }
        match self {
            FractionLaw::BetaPower { beta } => beta * z.powf(beta - 1.0),
            FractionLaw::Histogram { weights } => {
                let k = ((z * weights.len() as f64) as usize).min(weights.len() - 1);
                weights[k]
            }
            FractionLaw::Custom { psi, .. } => psi(z),
        }
    }

    /// `P(fraction <= z)`.
    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let z = z.min(1.0);
        match self {
            FractionLaw::BetaPower { beta } => z.powf(*beta),
            FractionLaw::Histogram { weights } => {
                let m = weights.len() as f64;
                let pos = z * m;
                let k = (pos as usize).min(weights.len() - 1);
                let full: f64 = weights[..k].iter().sum::<f64>() / m;
                full + weights[k] * (pos - k as f64) / m
            }
            FractionLaw::Custom { table, .. } => table.cdf(z),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self {
            FractionLaw::BetaPower { beta } => u.powf(1.0 / beta),
            FractionLaw::Histogram { weights } => {
                let m = weights.len() as f64;
                let total: f64 = weights.iter().sum::<f64>() / m;
                let mut target = u * total;
                for (k, w) in weights.iter().enumerate() {
                    let mass = w / m;
                    if target < mass || k + 1 == weights.len() {
                        return (k as f64 + if mass > 0.0 { target / mass } else { 0.5 }) / m;
                    }
                    target -= mass;
                }
                0.5
            }
            FractionLaw::Custom { table, .. } => table.quantile(u),
        }
    }

    /// Total mass, checked independently of the sampling tables.
    pub fn total_mass(&self) -> f64 {
        match self {
            FractionLaw::BetaPower { .. } => 1.0,
            FractionLaw::Histogram { weights } => weights.iter().sum::<f64>() / weights.len() as f64,
            FractionLaw::Custom { psi, .. } => integrate(|z| psi(z), 0.0, 1.0).unwrap_or(f64::NAN),
        }
    }
}

/// Law of the burst size in an additive reset, a density on (0, inf).
#[derive(Clone)]
pub enum BurstLaw {
    /// Exponential with the given mean.
    Exponential { mean: f64 },
    Custom { name: String, h: Evaluator, table: Arc<CdfTable> },
}

impl BurstLaw {
    pub fn custom(name: &str, h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let h: Evaluator = Arc::new(h);
        // Nodes t/(1-t) cover (0, 1e6) with resolution concentrated near 0.
        let m = 8192;
        let xs: Vec<f64> = (0..=m)
            .map(|i| {
                let t = (i as f64 / m as f64) * (1.0 - 1e-6);
                t / (1.0 - t)
            })
            .collect();
        let table = Arc::new(CdfTable::build(&*h, xs));
        BurstLaw::Custom { name: name.to_string(), h, table }
    }

    pub fn density(&self, z: f64) -> f64 {
        if !(z > 0.0) {
            return 0.0;
        }
        match self {
            BurstLaw::Exponential { mean } => (-z / mean).exp() / mean,
            BurstLaw::Custom { h, .. } => h(z),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        match self {
            BurstLaw::Exponential { mean } => -(-z / mean).exp_m1(),
            BurstLaw::Custom { table, .. } => table.cdf(z),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            BurstLaw::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            BurstLaw::Custom { table, .. } => table.quantile(rng.random()),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            BurstLaw::Exponential { .. } => 1.0,
            BurstLaw::Custom { h, .. } => integrate(|z| h(z), 0.0, f64::INFINITY).unwrap_or(f64::NAN),
        }
    }
}

/// How the level is reset at a jump.
#[derive(Clone)]
pub enum ResetKernel {
    Deterministic(DeterministicReset),
    /// Post-jump level is `theta * a` with `theta ~ psi` on (0, 1).
    Multiplicative(FractionLaw),
    /// Post-jump level is `a + z` with `z ~ h` on (0, inf).
    AdditiveBurst(BurstLaw),
}

impl fmt::Debug for ResetKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResetKernel::Deterministic(DeterministicReset::Scale { c }) => write!(f, "Deterministic(scale c={c})"),
            ResetKernel::Deterministic(DeterministicReset::Custom { name, .. }) => write!(f, "Deterministic({name})"),
            ResetKernel::Multiplicative(FractionLaw::BetaPower { beta }) => write!(f, "Multiplicative(beta-power beta={beta})"),
            ResetKernel::Multiplicative(FractionLaw::Histogram { weights }) => write!(f, "Multiplicative(histogram {weights:?})"),
            ResetKernel::Multiplicative(FractionLaw::Custom { name, .. }) => write!(f, "Multiplicative({name})"),
            ResetKernel::AdditiveBurst(BurstLaw::Exponential { mean }) => write!(f, "AdditiveBurst(exponential mean={mean})"),
            ResetKernel::AdditiveBurst(BurstLaw::Custom { name, .. }) => write!(f, "AdditiveBurst({name})"),
        }
    }
}

impl ResetKernel {
    /// Draw the post-jump level for a jump at `a`.
    pub fn sample<R: Rng + ?Sized>(&self, a: f64, rng: &mut R) -> f64 {
        match self {
            ResetKernel::Deterministic(d) => d.sigma(a),
            ResetKernel::Multiplicative(law) => a * law.sample(rng),
            ResetKernel::AdditiveBurst(law) => a + law.sample(rng),
        }
    }

    /// Check the kernel's structural requirements at the given probe levels.
    pub fn validate(&self, orientation: Orientation, probes: &[f64]) -> Result<(), ModelError> {
        match self {
            ResetKernel::Deterministic(d) => {
                if orientation != Orientation::Growth {
                    return Err(ModelError::Validation("deterministic resets require a growth flow".into()));
                }
                if let DeterministicReset::Scale { c } = d {
                    if !(*c > 0.0 && *c < 1.0) {
                        return Err(ModelError::Validation(format!("scale reset needs 0 < c < 1, got {c}")));
                    }
                }
                let mut prev = f64::NEG_INFINITY;
                for &x in probes {
                    let s = d.sigma(x);
                    if !(s < x) {
                        return Err(ModelError::Validation(format!("reset must decrease the level: sigma({x}) = {s}")));
                    }
                    if !(s > prev) {
                        return Err(ModelError::Validation("reset map sigma must be increasing".into()));
                    }
                    prev = s;
                    let back = d.lambda(s);
                    if (back - x).abs() > 1e-10 * x.abs().max(1.0) {
                        return Err(ModelError::Validation(format!("lambda(sigma({x})) = {back} is not {x}")));
                    }
                }
                Ok(())
            }
            ResetKernel::Multiplicative(law) => {
                if orientation != Orientation::Growth {
                    return Err(ModelError::Validation("multiplicative resets require a growth flow".into()));
                }
                if let FractionLaw::BetaPower { beta } = law {
                    if !(*beta > 0.0) {
                        return Err(ModelError::Validation(format!("beta must be positive, got {beta}")));
                    }
                }
                if let FractionLaw::Histogram { weights } = law {
                    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
                        return Err(ModelError::Validation("fraction histogram needs nonnegative weights".into()));
                    }
                }
                let m = law.total_mass();
                if !((m - 1.0).abs() <= 1e-8) {
                    return Err(ModelError::Validation(format!("fraction density psi integrates to {m}, not 1")));
                }
                Ok(())
            }
            ResetKernel::AdditiveBurst(law) => {
                if orientation != Orientation::Decay {
                    return Err(ModelError::Validation("additive bursts require a decay flow".into()));
                }
                if let BurstLaw::Exponential { mean } = law {
                    if !(*mean > 0.0) {
                        return Err(ModelError::Validation(format!("burst mean must be positive, got {mean}")));
                    }
                }
                let m = law.total_mass();
                if !((m - 1.0).abs() <= 1e-8) {
                    return Err(ModelError::Validation(format!("burst density h integrates to {m}, not 1")));
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        format!("{self:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn histogram_law_matches_cdf() {
        let law = FractionLaw::Histogram { weights: vec![1.5, 0.5] };
        assert!((law.cdf(0.5) - 0.75).abs() < 1e-15);
        assert!((law.total_mass() - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let below = (0..n).filter(|_| law.sample(&mut rng) < 0.5).count() as f64 / n as f64;
        assert!((below - 0.75).abs() < 0.02);
    }

    #[test]
    fn custom_fraction_table() {
        let law = FractionLaw::custom("2z", |z| 2.0 * z);
        assert!((law.cdf(0.5) - 0.25).abs() < 1e-9);
        assert!((law.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_psi_rejected() {
        let k = ResetKernel::Multiplicative(FractionLaw::Histogram { weights: vec![0.9] });
        assert!(k.validate(Orientation::Growth, &[1.0]).is_err());
    }

    #[test]
    fn burst_requires_decay() {
        let k = ResetKernel::AdditiveBurst(BurstLaw::Exponential { mean: 1.0 });
        assert!(k.validate(Orientation::Growth, &[1.0]).is_err());
        assert!(k.validate(Orientation::Decay, &[1.0]).is_ok());
    }
}
