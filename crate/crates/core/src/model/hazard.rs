use std::fmt;
use std::sync::Arc;

use super::domain::Orientation;
use super::flow::{improper_or_infinite, FlowKind, FlowModel};
use super::{Evaluator, ModelError};
use crate::numeric::{bracket_increasing, solve_increasing, Quadrature};

/// Jump intensity `phi`.
#[derive(Clone)]
pub enum HazardKind {
    Zero,
    /// `phi(x) = p`.
    Constant { p: f64 },
    /// `phi(x) = p x^alpha`.
    Power { p: f64, alpha: f64 },
    /// `phi(x) = s (x - 1)` on `(1, 2)`, zero elsewhere.
    Step { s: f64 },
    /// `phi(x) = p` for `x >= 1`, zero below.
    StepFlat { p: f64 },
    /// `phi(x) = k1 / (1 + x^alpha) + k1 eps`.
    Hill { k1: f64, alpha: f64, eps: f64 },
    /// User supplied intensity with the points where it is not smooth.
    Custom { name: String, phi: Evaluator, breaks: Vec<f64> },
}

impl fmt::Debug for HazardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HazardKind::Zero => write!(f, "Zero"),
            HazardKind::Constant { p } => write!(f, "Constant(p={p})"),
            HazardKind::Power { p, alpha } => write!(f, "Power(p={p},alpha={alpha})"),
            HazardKind::Step { s } => write!(f, "Step(S={s})"),
            HazardKind::StepFlat { p } => write!(f, "StepFlat(p={p})"),
            HazardKind::Hill { k1, alpha, eps } => write!(f, "Hill(k1={k1},alpha={alpha},eps={eps})"),
            HazardKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl HazardKind {
    pub fn custom(name: &str, phi: impl Fn(f64) -> f64 + Send + Sync + 'static, breaks: Vec<f64>) -> Self {
        HazardKind::Custom { name: name.to_string(), phi: Arc::new(phi), breaks }
    }

    pub fn phi(&self, x: f64) -> f64 {
        match self {
            HazardKind::Zero => 0.0,
            HazardKind::Constant { p } => *p,
            HazardKind::Power { p, alpha } => {
                if *alpha == 0.0 {
                    *p
                } else {
                    p * x.powf(*alpha)
                }
            }
            HazardKind::Step { s } => {
                if x > 1.0 && x < 2.0 {
                    s * (x - 1.0)
                } else {
                    0.0
                }
            }
            HazardKind::StepFlat { p } => {
                if x >= 1.0 {
                    *p
                } else {
                    0.0
                }
            }
            HazardKind::Hill { k1, alpha, eps } => k1 / (1.0 + x.powf(*alpha)) + k1 * eps,
            HazardKind::Custom { phi, .. } => phi(x),
        }
    }

    /// Points where `phi` has a jump or kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            HazardKind::Step { .. } => vec![1.0, 2.0],
            HazardKind::StepFlat { .. } => vec![1.0],
            HazardKind::Custom { breaks, .. } => breaks.clone(),
            _ => vec![],
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, HazardKind::Zero)
    }
}

/// Closed-form primitive of `phi / g` for the builtin pairs, up to a constant.
fn primitive(hazard: &HazardKind, flow: &FlowKind, x: f64) -> Option<f64> {
    use FlowKind as F;
    use HazardKind as H;
    let ln_ratio = |c: f64| -> f64 { c * x.ln() };
    let pow_term = |c: f64, a: f64| -> f64 {
        if a == 0.0 {
            c * x.ln()
        } else {
            c * x.powf(a) / a
        }
    };
    Some(match (hazard, flow) {
        (H::Zero, _) => 0.0,
        (H::Constant { p }, F::Constant { k }) => p * x / k,
        (H::Constant { p }, F::Linear { k }) => ln_ratio(p / k),
        (H::Constant { p }, F::LinearDecay { gamma }) => ln_ratio(-p / gamma),
        (H::Constant { p }, F::Logistic { b }) => 0.5 * p * b * (x / (2.0 - x)).ln(),
        (H::Power { p, alpha }, F::Constant { k }) => pow_term(p / k, alpha + 1.0),
        (H::Power { p, alpha }, F::Linear { k }) => pow_term(p / k, *alpha),
        (H::Power { p, alpha }, F::LinearDecay { gamma }) => pow_term(-p / gamma, *alpha),
        (H::StepFlat { p }, F::Constant { k }) => p * (x - 1.0).max(0.0) / k,
        (H::StepFlat { p }, F::Linear { k }) => p * x.max(1.0).ln() / k,
        (H::StepFlat { p }, F::LinearDecay { gamma }) => -p * x.max(1.0).ln() / gamma,
        (H::Step { s }, F::Logistic { b }) => {
            let y = x.max(1.0);
            -0.5 * s * b * (y * (2.0 - y)).ln()
        }
        (H::Step { s }, F::Constant { k }) => {
            let y = x.clamp(1.0, 2.0) - 1.0;
            0.5 * s * y * y / k
        }
        (H::Step { s }, F::Linear { k }) => {
            let y = x.clamp(1.0, 2.0);
            s * ((y - 1.0) - y.ln()) / k
        }
        (H::Hill { k1, alpha, eps }, F::LinearDecay { gamma }) => -(k1 / gamma) * hill_log(x, *alpha, *eps),
        (H::Hill { k1, alpha, eps }, F::Linear { k }) => (k1 / k) * hill_log(x, *alpha, *eps),
        _ => return None,
    })
}

/// `(1 + eps) ln x - ln(1 + x^alpha) / alpha`, evaluated without overflow.
fn hill_log(x: f64, alpha: f64, eps: f64) -> f64 {
    if x == f64::INFINITY {
        return if eps > 0.0 { f64::INFINITY } else { 0.0 };
    }
    let eps_term = if eps == 0.0 { 0.0 } else { eps * x.ln() };
    if x < 1.0 {
        x.ln() + eps_term - (x.powf(alpha)).ln_1p() / alpha
    } else {
        eps_term - (x.powf(-alpha)).ln_1p() / alpha
    }
}

/// Hazard with its cumulative `Q(x) = int_{x1}^x phi / g`.
#[derive(Clone, Debug)]
pub struct HazardModel {
    pub kind: HazardKind,
    /// Anchor with `Q(x1) = 0`.
    pub x1: f64,
    /// Closed form available for this hazard/flow pair.
    closed: bool,
    /// Offset so that `Q = raw - offset`.
    offset: f64,
    /// Reference point of the numeric primitive.
    raw_ref: f64,
    q_d0: f64,
    q_d1: f64,
}

impl HazardModel {
    /// Attach a hazard to `flow`. Without an explicit anchor, `Q` vanishes at
    /// the upstream endpoint when the integral converges there, and at the
    /// default anchor otherwise.
    pub fn new(kind: HazardKind, flow: &FlowModel, x1: Option<f64>) -> Result<Self, ModelError> {
        let dom = flow.domain;
        match &kind {
            HazardKind::Constant { p } | HazardKind::StepFlat { p } if *p < 0.0 => {
                return Err(ModelError::Validation(format!("hazard level must be nonnegative, got {p}")))
            }
            HazardKind::Power { p, .. } if *p < 0.0 || dom.d0 < 0.0 => {
                return Err(ModelError::Validation("power hazard needs p >= 0 on a domain inside (0, inf)".into()))
            }
            HazardKind::Step { s } if *s < 0.0 => {
                return Err(ModelError::Validation(format!("step slope must be nonnegative, got {s}")))
            }
            HazardKind::Hill { k1, alpha, eps } if *k1 < 0.0 || *alpha <= 0.0 || *eps < 0.0 || dom.d0 < 0.0 => {
                return Err(ModelError::Validation("Hill hazard needs k1 >= 0, alpha > 0, eps >= 0 on (0, inf)".into()))
            }
            _ => {}
        }
        let closed = primitive(&kind, &flow.kind, flow.x0).is_some();
        let raw_ref = flow.x0;
        let mut h = Self { kind, x1: f64::NAN, closed, offset: 0.0, raw_ref, q_d0: f64::NAN, q_d1: f64::NAN };
        let upstream = dom.upstream();
        let raw_up = h.raw_endpoint(flow, upstream);
        let x1 = match x1 {
            Some(a) => a,
            None if raw_up.is_finite() => upstream,
            None => dom.default_anchor(None),
        };
        if !(dom.contains(x1) || (x1 == upstream && raw_up.is_finite())) {
            return Err(ModelError::Validation(format!("hazard anchor x1={x1} is not admissible")));
        }
        h.x1 = x1;
        h.offset = if x1 == upstream { raw_up } else { h.raw(flow, x1)? };
        h.q_d0 = crate::numeric::ext_sub(h.raw_endpoint(flow, dom.d0), h.offset);
        h.q_d1 = crate::numeric::ext_sub(h.raw_endpoint(flow, dom.d1), h.offset);
        Ok(h)
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.kind.phi(x)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.kind.breakpoints()
    }

    fn quadrature() -> Quadrature {
        Quadrature { abs_tol: 1e-13, rel_tol: 1e-12, ..Quadrature::default() }
    }

    fn raw(&self, flow: &FlowModel, x: f64) -> Result<f64, ModelError> {
        if self.closed {
            return Ok(primitive(&self.kind, &flow.kind, x).expect("closed pair"));
        }
        let f = |z: f64| self.kind.phi(z) / flow.g(z);
        Self::quadrature()
            .integrate_with_breaks(f, self.raw_ref, x, &self.kind.breakpoints())
            .map(|r| r.value)
            .map_err(|_| ModelError::NonFinite { x })
    }

    fn raw_endpoint(&self, flow: &FlowModel, end: f64) -> f64 {
        if self.closed {
            let v = primitive(&self.kind, &flow.kind, end).expect("closed pair");
            return if v.is_nan() { 0.0 } else { v };
        }
        let f = |z: f64| self.kind.phi(z) / flow.g(z);
        // Integrate piecewise through the breakpoints, then the improper tail.
        let mut pts: Vec<f64> = self.kind.breakpoints().into_iter().filter(|&b| flow.domain.contains(b)).collect();
        pts.push(self.raw_ref);
        pts.sort_by(f64::total_cmp);
        let q = Self::quadrature();
        let last = if end > self.raw_ref { *pts.last().unwrap() } else { pts[0] };
        let body = q.integrate_with_breaks(f, self.raw_ref, last, &pts).map(|r| r.value).unwrap_or(f64::NAN);
        body + improper_or_infinite(&q, &f, last, end)
    }

    /// `Q(x)`; endpoints return the extended-real limits.
    pub fn q(&self, flow: &FlowModel, x: f64) -> f64 {
        if x == flow.domain.d0 {
            return self.q_d0;
        }
        if x == flow.domain.d1 {
            return self.q_d1;
        }
        if self.closed {
            return primitive(&self.kind, &flow.kind, x).expect("closed pair") - self.offset;
        }
        self.raw(flow, x).map(|v| v - self.offset).unwrap_or(f64::NAN)
    }

    /// `Q(d0)` and `Q(d1)`.
    pub fn endpoint_values(&self) -> (f64, f64) {
        (self.q_d0, self.q_d1)
    }

    /// First level along the flow where `Q` reaches `s`; the downstream
    /// endpoint when `s` is at or beyond the limit of `Q` there.
    pub fn q_inv(&self, flow: &FlowModel, s: f64) -> Result<f64, ModelError> {
        let dom = flow.domain;
        if s.is_nan() {
            return Err(ModelError::OutOfRange { s });
        }
        // Along the flow Q is nondecreasing; `up`/`down` are flow-order endpoints.
        let (up, down, q_up, q_down) = match dom.orientation {
            Orientation::Growth => (dom.d0, dom.d1, self.q_d0, self.q_d1),
            Orientation::Decay => (dom.d1, dom.d0, self.q_d1, self.q_d0),
        };
        if s < q_up {
            return Err(ModelError::OutOfRange { s });
        }
        if s >= q_down {
            return Ok(down);
        }
        if s == q_up {
            return Ok(up);
        }
        if let Some(x) = self.closed_inverse(flow, s) {
            return Ok(x.clamp(dom.d0, dom.d1));
        }
        self.numeric_inverse(flow, s)
    }

    fn closed_inverse(&self, flow: &FlowModel, s: f64) -> Option<f64> {
        use FlowKind as F;
        use HazardKind as H;
        let r = s + self.offset;
        let pow_inv = |c: f64, a: f64| -> f64 {
            if a == 0.0 {
                (r / c).exp()
            } else {
                (a * r / c).powf(1.0 / a)
            }
        };
        Some(match (&self.kind, &flow.kind) {
            (H::Constant { p }, F::Constant { k }) => r * k / p,
            (H::Constant { p }, F::Linear { k }) => (r * k / p).exp(),
            (H::Constant { p }, F::LinearDecay { gamma }) => (-r * gamma / p).exp(),
            (H::Power { p, alpha }, F::Constant { k }) => pow_inv(p / k, alpha + 1.0),
            (H::Power { p, alpha }, F::Linear { k }) => pow_inv(p / k, *alpha),
            (H::Power { p, alpha }, F::LinearDecay { gamma }) => pow_inv(-p / gamma, *alpha),
            (H::StepFlat { p }, F::Linear { k }) if r > 0.0 => (r * k / p).exp(),
            (H::StepFlat { p }, F::Constant { k }) if r > 0.0 => 1.0 + r * k / p,
            (H::Step { s: sl }, F::Logistic { b }) if r > 0.0 => 1.0 + (-(-2.0 * r / (sl * b)).exp_m1()).sqrt(),
            _ => return None,
        })
    }

    fn numeric_inverse(&self, flow: &FlowModel, s: f64) -> Result<f64, ModelError> {
        let dom = flow.domain;
        let sign = dom.orientation.sign();
        let f = |y: f64| self.q(flow, sign * y);
        let (a, b) = match dom.orientation {
            Orientation::Growth => (dom.d0, dom.d1),
            Orientation::Decay => (-dom.d1, -dom.d0),
        };
        let start = sign * dom.default_anchor(None);
        let (lo, hi) = bracket_increasing(&f, s, start, a, b).map_err(|_| ModelError::OutOfRange { s })?;
        solve_increasing(f, s, lo, hi, 1e-14).map(|y| sign * y).map_err(|_| ModelError::OutOfRange { s })
    }

    pub fn label(&self) -> String {
        format!("{:?}@x1={}", self.kind, self.x1)
    }
}
