//! Closed-form and series reference densities for the builtin scenarios, and
//! the parameter solvers they need.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::Grid;
use crate::numeric::{bisect, QuadError, Quadrature};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReferenceError {
    #[error("no valid exponent: b ln(1/sigma) = {0} must exceed 1")]
    NoValidExponent(f64),
    #[error("series did not converge at x = {x} after {terms} terms")]
    SlowConvergence { x: f64, terms: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("normalization failed: {0}")]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Constant taken from a closed form.
    Analytic,
    /// Constant computed by quadrature (the multiplier applied to the shape).
    Numeric(f64),
}

/// A probability density on an interval, given pointwise.
#[derive(Clone)]
pub struct ReferenceDensity {
    pub scenario_id: String,
    evaluator: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub support: (f64, f64),
    pub normalization: Normalization,
    pub note: String,
    /// Points where the density is not smooth.
    pub breaks: Vec<f64>,
}

impl std::fmt::Debug for ReferenceDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceDensity")
            .field("scenario_id", &self.scenario_id)
            .field("support", &self.support)
            .field("normalization", &self.normalization)
            .field("note", &self.note)
            .finish()
    }
}

fn quad() -> Quadrature {
    Quadrature::with_tolerances(1e-15, 1e-12)
}

impl ReferenceDensity {
    pub fn new(
        scenario_id: &str,
        support: (f64, f64),
        normalization: Normalization,
        note: &str,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            evaluator: Arc::new(f),
            support,
            normalization,
            note: note.into(),
            breaks: Vec::new(),
        }
    }

    /// Normalizes `shape` by quadrature over `support`.
    pub fn normalized_shape(
        scenario_id: &str,
        support: (f64, f64),
        note: &str,
        shape: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, ReferenceError> {
        let total = quad().integrate(&shape, support.0, support.1)?.value;
        if !(total > 0.0 && total.is_finite()) {
            return Err(ReferenceError::Invalid(format!("shape integrates to {total}")));
        }
        let c = 1.0 / total;
        Ok(Self::new(scenario_id, support, Normalization::Numeric(c), note, move |x| c * shape(x)))
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }

    /// Density at `x` (zero off the support).
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.support.0 || x >= self.support.1 {
            0.0
        } else {
            (self.evaluator)(x)
        }
    }

    pub fn integral(&self, a: f64, b: f64) -> Result<f64, QuadError> {
        let (lo, hi) = (a.max(self.support.0), b.min(self.support.1));
        if lo >= hi {
            return Ok(0.0);
        }
        Ok(quad().integrate_with_breaks(|x| self.eval(x), lo, hi, &self.breaks)?.value)
    }

    pub fn total_mass(&self) -> Result<f64, QuadError> {
        self.integral(self.support.0, self.support.1)
    }

    /// Exact cell masses on `grid` and the mass outside it.
    pub fn cell_masses(&self, grid: &Grid) -> Result<(Vec<f64>, f64), QuadError> {
        let masses = (0..grid.n()).map(|i| self.integral(grid.left(i), grid.right(i))).collect::<Result<Vec<_>, _>>()?;
        let outside = self.integral(self.support.0, grid.x_min())? + self.integral(grid.x_max(), self.support.1)?;
        Ok((masses, outside))
    }
}

/// Nontrivial root `r` of `b - (r - 1) = b sigma^(r - 1)` in `(1, b + 1)`.
pub fn tyson_hannsgen_exponent(b: f64, sigma: f64) -> Result<f64, ReferenceError> {
    if !(b > 0.0 && sigma > 0.0 && sigma < 1.0) {
        return Err(ReferenceError::Invalid(format!("need b > 0 and 0 < sigma < 1, got b={b}, sigma={sigma}")));
    }
    let margin = b * (1.0 / sigma).ln();
    if margin <= 1.0 {
        return Err(ReferenceError::NoValidExponent(margin));
    }
    let f = |r: f64| b - (r - 1.0) - b * sigma.powf(r - 1.0);
    bisect(f, 1.0 + 1e-9, b + 1.0, 1e-13, 200).map_err(|e| ReferenceError::Invalid(e.to_string()))
}

/// `((r - 1) / sigma) (x / sigma)^(-r)` on `(sigma, inf)`.
pub fn th_density(r: f64, sigma: f64, x: f64) -> f64 {
    if x <= sigma {
        return 0.0;
    }
    (r - 1.0) / sigma * (x / sigma).powf(-r)
}

/// `S b 2^(S b) (x - 1/2) (x (1 - x))^(S b / 2 - 1)` on `(1/2, 1)`.
pub fn mackey_ss_density(s: f64, b: f64, x: f64) -> f64 {
    if !(x > 0.5 && x < 1.0) {
        return 0.0;
    }
    let sb = s * b;
    sb * 2f64.powf(sb) * (x - 0.5) * (x * (1.0 - x)).powf(sb / 2.0 - 1.0)
}

/// Stationary density `sum_n c_n exp(-Q(2^n x))` for constant speed, hazard
/// proportional to `x^alpha` and halving at division, with
/// `Q(x) = b x^(alpha + 1) / (alpha + 1)`.
#[derive(Debug, Clone)]
pub struct DivisionSeries {
    pub alpha: f64,
    pub b: f64,
    /// Coefficients, `c_0` normalizing the sum.
    pub coefficients: Vec<f64>,
    pub tail_tol: f64,
}

const SERIES_MAX_TERMS: usize = 200;

impl DivisionSeries {
    pub fn new(alpha: f64, b: f64, tail_tol: f64) -> Result<Self, ReferenceError> {
        if !(alpha > -1.0 && b > 0.0) {
            return Err(ReferenceError::Invalid(format!("need alpha > -1 and b > 0, got {alpha}, {b}")));
        }
        let a1 = alpha + 1.0;
        let mut c = vec![1.0f64];
        for n in 1..SERIES_MAX_TERMS {
            let next = c[n - 1] * 2f64.powf(a1) / (1.0 - 2f64.powf(n as f64 * a1));
            if next == 0.0 {
                break;
            }
            c.push(next);
        }
        // Each term integrates to 2^(-n) times the integral of exp(-Q).
        let q = move |x: f64| b * x.powf(a1) / a1;
        let base = quad().integrate(|x| (-q(x)).exp(), 0.0, f64::INFINITY)?.value;
        let total: f64 = c.iter().enumerate().map(|(n, cn)| cn * base * 0.5f64.powi(n as i32)).sum();
        let c0 = 1.0 / total;
        Ok(Self { alpha, b, coefficients: c.into_iter().map(|x| x * c0).collect(), tail_tol })
    }

    fn q(&self, x: f64) -> f64 {
        self.b * x.powf(self.alpha + 1.0) / (self.alpha + 1.0)
    }

    /// Value at `x` and the number of terms used.
    pub fn eval(&self, x: f64) -> Result<(f64, usize), ReferenceError> {
        if x <= 0.0 {
            return Ok((0.0, 0));
        }
        let mut sum = 0.0;
        let mut scale = 0.0;
        let mut y = x;
        for (n, cn) in self.coefficients.iter().enumerate() {
            let term = cn * (-self.q(y)).exp();
            sum += term;
            scale += term.abs();
            if term.abs() <= self.tail_tol * sum.abs() || term.abs() <= f64::EPSILON * 1e-3 * scale {
                return Ok((sum, n + 1));
            }
            y *= 2.0;
        }
        Err(ReferenceError::SlowConvergence { x, terms: self.coefficients.len() })
    }

    /// Derivative of the truncated series at `x`.
    pub fn derivative(&self, x: f64) -> Result<f64, ReferenceError> {
        let (_, terms) = self.eval(x)?;
        let mut y = x;
        let mut d = 0.0;
        for cn in &self.coefficients[..terms] {
            let scale = y / x;
            d -= cn * self.b * y.powf(self.alpha) * scale * (-self.q(y)).exp();
            y *= 2.0;
        }
        Ok(d)
    }
}

/// One value of the division series (see [`DivisionSeries`]).
pub fn exl1_series(alpha: f64, b: f64, x: f64, tail_tol: f64) -> Result<(f64, usize), ReferenceError> {
    DivisionSeries::new(alpha, b, tail_tol)?.eval(x)
}

/// Normalized `x^(beta - 1) exp(-b x^(alpha + 1) / (alpha + 1))` on `(0, inf)`.
pub fn multiplicative_vstar(alpha: f64, beta: f64, b: f64) -> Result<ReferenceDensity, ReferenceError> {
    if !(alpha > -1.0 && beta > 0.0 && b > 0.0) {
        return Err(ReferenceError::Invalid(format!("need alpha > -1, beta > 0, b > 0; got {alpha}, {beta}, {b}")));
    }
    let a1 = alpha + 1.0;
    ReferenceDensity::normalized_shape(
        "multiplicative-beta",
        (0.0, f64::INFINITY),
        "jump-chain density, shape x^(beta-1) exp(-Q(x)), normalized by quadrature",
        move |x| x.powf(beta - 1.0) * (-b * x.powf(a1) / a1).exp(),
    )
}

/// Normalized `x^(a(1+eps) - 1) exp(-x/b) (1 + x^alpha)^(-a/alpha)` on
/// `(0, inf)`. `alpha = inf` drops the last factor (pure gamma).
pub fn friedman_density(a: f64, eps: f64, alpha: f64, b: f64) -> Result<ReferenceDensity, ReferenceError> {
    if !(a > 0.0 && eps >= 0.0 && alpha > 0.0 && b > 0.0) {
        return Err(ReferenceError::Invalid(format!("need a, alpha, b > 0 and eps >= 0; got {a}, {eps}, {alpha}, {b}")));
    }
    let power = a * (1.0 + eps) - 1.0;
    let id = if alpha.is_infinite() || eps == 0.0 { "friedman-const" } else { "friedman-hill" };
    let d = ReferenceDensity::normalized_shape(id, (0.0, f64::INFINITY), "stationary density, normalized by quadrature", move |x| {
        let base = x.powf(power) * (-x / b).exp();
        if alpha.is_infinite() {
            base
        } else {
            base * (1.0 + x.powf(alpha)).powf(-a / alpha)
        }
    })?;
    Ok(d.with_breaks(vec![1.0]))
}

/// Largest relative defect `|K u - u| / u` for `u(x) = 1/x` under
/// `K u(x) = b / (2^b x^(b+1)) int_0^(2x) y^b u(y) dy`.
pub fn blas_counterexample_residual(b: f64, xs: &[f64]) -> Result<f64, ReferenceError> {
    let mut worst: f64 = 0.0;
    for &x in xs {
        let integral = quad().integrate(|y| y.powf(b - 1.0), 0.0, 2.0 * x)?.value;
        let ku = b / (2f64.powf(b) * x.powf(b + 1.0)) * integral;
        worst = worst.max(((ku - 1.0 / x) * x).abs());
    }
    Ok(worst)
}

/// Reference jump-chain density for the builtins that have one.
pub fn reference_vstar(scenario: &crate::model::ScenarioSpec) -> Result<Option<ReferenceDensity>, ReferenceError> {
    let p = |k: &str| scenario.params.get(k).copied().unwrap_or(f64::NAN);
    let d = match scenario.id.as_str() {
        "tyson-hannsgen" => {
            let sigma = p("sigma");
            let r = tyson_hannsgen_exponent(p("b"), sigma)?;
            Some(ReferenceDensity::new(
                "tyson-hannsgen",
                (sigma, f64::INFINITY),
                Normalization::Analytic,
                "power law with exponent from the division balance",
                move |x| th_density(r, sigma, x),
            ))
        }
        "mackey-ss86" => {
            let (s, b) = (p("s"), p("b"));
            Some(ReferenceDensity::new("mackey-ss86", (0.5, 1.0), Normalization::Analytic, "closed form", move |x| {
                mackey_ss_density(s, b, x)
            }))
        }
        "multiplicative-beta" => Some(multiplicative_vstar(p("alpha"), p("beta"), p("b"))?),
        "power-phi" => {
            let (alpha, b) = (p("alpha"), p("b"));
            let series = DivisionSeries::new(alpha, b, 1e-15)?;
            Some(ReferenceDensity::normalized_shape(
                "power-phi",
                (0.0, f64::INFINITY),
                "x^alpha u(2x) with u the division series",
                move |x| x.powf(alpha) * series.eval(2.0 * x).map(|v| v.0).unwrap_or(0.0).max(0.0),
            )?)
        }
        _ => None,
    };
    Ok(d)
}

/// Reference continuous-time stationary density for the builtins that have one.
pub fn reference_ustar(scenario: &crate::model::ScenarioSpec) -> Result<Option<ReferenceDensity>, ReferenceError> {
    let p = |k: &str| scenario.params.get(k).copied().unwrap_or(f64::NAN);
    let d = match scenario.id.as_str() {
        "power-phi" => {
            let series = DivisionSeries::new(p("alpha"), p("b"), 1e-15)?;
            Some(ReferenceDensity::new(
                "power-phi",
                (0.0, f64::INFINITY),
                Normalization::Numeric(series.coefficients[0]),
                "division series",
                move |x| series.eval(x).map(|v| v.0).unwrap_or(0.0).max(0.0),
            ))
        }
        "friedman-const" => Some(friedman_density(p("k1") / p("gamma"), 0.0, f64::INFINITY, p("mean"))?),
        "friedman-hill" => Some(friedman_density(p("k1") / p("gamma"), p("eps"), p("alpha"), p("mean"))?),
        _ => None,
    };
    Ok(d)
}
