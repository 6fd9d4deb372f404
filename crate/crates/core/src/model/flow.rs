use std::fmt;
use std::sync::Arc;

use super::domain::{Orientation, StateDomain};
use super::{Evaluator, ModelError};
use crate::numeric::{bracket_increasing, solve_increasing, QuadError, Quadrature};

/// Velocity field `g` of the flow between jumps.
#[derive(Clone)]
pub enum FlowKind {
    /// `g(x) = k`.
    Constant { k: f64 },
    /// `g(x) = k x`.
    Linear { k: f64 },
    /// `g(x) = x (2 - x) / b` on `(0, 2)`.
    Logistic { b: f64 },
    /// `g(x) = -gamma x`.
    LinearDecay { gamma: f64 },
    /// User supplied velocity.
    Custom { name: String, g: Evaluator },
}

impl fmt::Debug for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowKind::Constant { k } => write!(f, "Constant(k={k})"),
            FlowKind::Linear { k } => write!(f, "Linear(k={k})"),
            FlowKind::Logistic { b } => write!(f, "Logistic(b={b})"),
            FlowKind::LinearDecay { gamma } => write!(f, "LinearDecay(gamma={gamma})"),
            FlowKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Flow with its time-potential `G(x) = int_{x0}^x dz / g(z)`.
#[derive(Clone, Debug)]
pub struct FlowModel {
    pub kind: FlowKind,
    pub domain: StateDomain,
    /// Anchor with `G(x0) = 0`.
    pub x0: f64,
    /// `G` at the two domain endpoints (extended reals).
    g_at_d0: f64,
    g_at_d1: f64,
}

pub(crate) fn improper_or_infinite(q: &Quadrature, f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    match q.integrate(f, a, b) {
        Ok(r) if r.value.abs() < 1e12 => r.value,
        Ok(r) => r.value.signum() * f64::INFINITY,
        Err(QuadError::NoConvergence { estimate, .. }) | Err(QuadError::NonFinite { x: estimate }) => {
            let s = if estimate.is_nan() || estimate == 0.0 { (b - a).signum() } else { estimate.signum() };
            s * f64::INFINITY
        }
    }
}

impl FlowModel {
    /// Build a flow on `domain` anchored at `x0` (defaults to 1 or the midpoint).
    pub fn new(kind: FlowKind, domain: StateDomain, x0: Option<f64>) -> Result<Self, ModelError> {
        let x0 = x0.unwrap_or_else(|| domain.default_anchor(None));
        if !domain.contains(x0) {
            return Err(ModelError::Validation(format!("flow anchor x0={x0} outside the domain")));
        }
        match &kind {
            FlowKind::Constant { k } | FlowKind::Linear { k } if !(*k > 0.0) => {
                return Err(ModelError::Validation(format!("flow rate must be positive, got {k}")))
            }
            FlowKind::Logistic { b } if !(*b > 0.0) => {
                return Err(ModelError::Validation(format!("logistic time scale must be positive, got {b}")))
            }
            FlowKind::LinearDecay { gamma } if !(*gamma > 0.0) => {
                return Err(ModelError::Validation(format!("decay rate must be positive, got {gamma}")))
            }
            FlowKind::Linear { .. } | FlowKind::LinearDecay { .. } if domain.d0 < 0.0 => {
                return Err(ModelError::Validation("linear flows require a domain inside (0, inf)".into()))
            }
            FlowKind::Logistic { .. } if domain.d0 < 0.0 || domain.d1 > 2.0 => {
                return Err(ModelError::Validation("logistic flow requires a domain inside (0, 2)".into()))
            }
            _ => {}
        }
        let mut flow = Self { kind, domain, x0, g_at_d0: f64::NAN, g_at_d1: f64::NAN };
        flow.g_at_d0 = flow.compute_endpoint_potential(domain.d0);
        flow.g_at_d1 = flow.compute_endpoint_potential(domain.d1);
        Ok(flow)
    }

    pub fn orientation(&self) -> Orientation {
        self.domain.orientation
    }

    /// Velocity `g(x)`.
    pub fn g(&self, x: f64) -> f64 {
        match &self.kind {
            FlowKind::Constant { k } => *k,
            FlowKind::Linear { k } => k * x,
            FlowKind::Logistic { b } => x * (2.0 - x) / b,
            FlowKind::LinearDecay { gamma } => -gamma * x,
            FlowKind::Custom { g, .. } => g(x),
        }
    }

    fn closed_potential(&self, x: f64) -> Option<f64> {
        let x0 = self.x0;
        Some(match &self.kind {
            FlowKind::Constant { k } => (x - x0) / k,
            FlowKind::Linear { k } => (x / x0).ln() / k,
            FlowKind::Logistic { b } => 0.5 * b * ((x / (2.0 - x)).ln() - (x0 / (2.0 - x0)).ln()),
            FlowKind::LinearDecay { gamma } => -(x / x0).ln() / gamma,
            FlowKind::Custom { .. } => return None,
        })
    }

    fn compute_endpoint_potential(&self, end: f64) -> f64 {
        if let Some(v) = self.closed_potential(end) {
            return if v.is_nan() { f64::INFINITY } else { v };
        }
        let q = Quadrature::default();
        let f = |z: f64| 1.0 / self.g(z);
        improper_or_infinite(&q, &f, self.x0, end)
    }

    /// `G(x)`; `+-inf` at endpoints where the integral diverges.
    pub fn big_g(&self, x: f64) -> Result<f64, ModelError> {
        if x == self.domain.d0 {
            return Ok(self.g_at_d0);
        }
        if x == self.domain.d1 {
            return Ok(self.g_at_d1);
        }
        if let Some(v) = self.closed_potential(x) {
            return Ok(v);
        }
        let q = Quadrature::default();
        q.integrate(|z| 1.0 / self.g(z), self.x0, x)
            .map(|r| r.value)
            .map_err(|_| ModelError::NonFinite { x })
    }

    /// `G` at `d0` and `d1`.
    pub fn endpoint_potentials(&self) -> (f64, f64) {
        (self.g_at_d0, self.g_at_d1)
    }

    /// `G^{-1}(s)`, returning the endpoint the flow reaches when `s` is outside
    /// the range of `G`.
    pub fn big_g_inv(&self, s: f64) -> f64 {
        let d = self.domain;
        let (lo_end, hi_end, s_lo, s_hi) = match d.orientation {
            Orientation::Growth => (d.d0, d.d1, self.g_at_d0, self.g_at_d1),
            Orientation::Decay => (d.d1, d.d0, self.g_at_d1, self.g_at_d0),
        };
        if s.is_nan() {
            return f64::NAN;
        }
        if s <= s_lo {
            return lo_end;
        }
        if s >= s_hi {
            return hi_end;
        }
        let x0 = self.x0;
        let x = match &self.kind {
            FlowKind::Constant { k } => x0 + k * s,
            FlowKind::Linear { k } => x0 * (k * s).exp(),
            FlowKind::Logistic { b } => {
                let l = 2.0 * s / b + (x0 / (2.0 - x0)).ln();
                logistic_from_logit(l)
            }
            FlowKind::LinearDecay { gamma } => x0 * (-gamma * s).exp(),
            FlowKind::Custom { .. } => return self.numeric_inverse(s),
        };
        x.clamp(d.d0, d.d1)
    }

    fn numeric_inverse(&self, s: f64) -> f64 {
        let d = self.domain;
        let sign = d.orientation.sign();
        // Work in the coordinate where G is increasing.
        let f = |y: f64| self.big_g(sign * y).unwrap_or(f64::NAN);
        let (a, b) = match d.orientation {
            Orientation::Growth => (d.d0, d.d1),
            Orientation::Decay => (-d.d1, -d.d0),
        };
        match bracket_increasing(&f, s, sign * self.x0, a, b) {
            Ok((lo, hi)) => solve_increasing(f, s, lo, hi, 1e-14).map(|y| sign * y).unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        }
    }

    /// Flow map `pi_t x = G^{-1}(G(x) + t)`; negative `t` runs backwards.
    pub fn flow_map(&self, t: f64, x: f64) -> f64 {
        if t == 0.0 {
            return x;
        }
        let d = self.domain;
        if !d.contains(x) {
            return x;
        }
        let y = match &self.kind {
            FlowKind::Constant { k } => x + k * t,
            FlowKind::Linear { k } => x * (k * t).exp(),
            FlowKind::LinearDecay { gamma } => x * (-gamma * t).exp(),
            FlowKind::Logistic { b } => logistic_from_logit((x / (2.0 - x)).ln() + 2.0 * t / b),
            FlowKind::Custom { .. } => match self.big_g(x) {
                Ok(gx) => return self.big_g_inv(gx + t),
                Err(_) => return f64::NAN,
            },
        };
        if y <= d.d0 {
            d.d0
        } else if y >= d.d1 {
            d.d1
        } else {
            y
        }
    }

    /// Travel time from `x` to `y` along the flow (`G(y) - G(x)`).
    pub fn travel_time(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            FlowKind::Constant { k } => (y - x) / k,
            FlowKind::Linear { k } => (y / x).ln() / k,
            FlowKind::LinearDecay { gamma } => -(y / x).ln() / gamma,
            FlowKind::Logistic { b } => 0.5 * b * ((y / (2.0 - y)).ln() - (x / (2.0 - x)).ln()),
            FlowKind::Custom { .. } => {
                let gy = self.big_g(y).unwrap_or(f64::NAN);
                let gx = self.big_g(x).unwrap_or(f64::NAN);
                crate::numeric::ext_sub(gy, gx)
            }
        }
    }

    /// Stable identifier used in manifests and reports.
    pub fn label(&self) -> String {
        format!("{:?}@x0={}", self.kind, self.x0)
    }

    pub fn custom(name: &str, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> FlowKind {
        FlowKind::Custom { name: name.to_string(), g: Arc::new(g) }
    }
}

fn logistic_from_logit(l: f64) -> f64 {
    if l >= 0.0 {
        2.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        2.0 * e / (1.0 + e)
    }
}
