//! Pointwise evaluation of the operators by adaptive quadrature.
//!
//! These are independent of the grid matrices and serve as their reference:
//! inputs are densities given as functions, outputs are values at single
//! points.

use crate::model::{Dynamics, Orientation, ResetKernel};
use crate::numeric::{QuadError, Quadrature};

fn quad() -> Quadrature {
    Quadrature::with_tolerances(1e-14, 1e-11)
}

/// `(R_lambda v)(x)`: integral over upstream sources `y` of
/// `exp(Q_lambda(y) - Q_lambda(x)) v(y) / |g(x)|`.
pub fn resolvent_at(dynamics: &Dynamics, lambda: f64, v: &dyn Fn(f64) -> f64, x: f64) -> Result<f64, QuadError> {
    let px = dynamics.q_lambda(lambda, x);
    let up = dynamics.domain().upstream();
    let f = |y: f64| {
        let w = (dynamics.q_lambda(lambda, y) - px).exp();
        if w == 0.0 {
            0.0
        } else {
            w * v(y)
        }
    };
    let breaks = dynamics.hazard.breakpoints();
    let r = match dynamics.orientation() {
        Orientation::Growth => quad().integrate_with_breaks(f, up, x, &breaks)?,
        Orientation::Decay => quad().integrate_with_breaks(f, x, up, &breaks)?,
    };
    Ok(r.value / dynamics.g(x).abs())
}

/// `(phi R_lambda v)(x)`.
pub fn phi_resolvent_at(dynamics: &Dynamics, lambda: f64, v: &dyn Fn(f64) -> f64, x: f64) -> Result<f64, QuadError> {
    let p = dynamics.phi(x);
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(p * resolvent_at(dynamics, lambda, v, x)?)
}

/// `(P w)(x)` for a density `w` given pointwise.
pub fn jump_at(reset: &ResetKernel, dynamics: &Dynamics, w: &dyn Fn(f64) -> f64, x: f64) -> Result<f64, QuadError> {
    let dom = dynamics.domain();
    match reset {
        ResetKernel::Deterministic(d) => {
            let pre = d.lambda(x);
            if !(pre > dom.d0 && pre < dom.d1) {
                return Ok(0.0);
            }
            Ok(d.dlambda(x) * w(pre))
        }
        ResetKernel::Multiplicative(law) => {
            let f = |y: f64| law.density(x / y) * w(y) / y;
            Ok(quad().integrate(f, x, dom.d1)?.value)
        }
        ResetKernel::AdditiveBurst(law) => {
            let f = |y: f64| law.density(x - y) * w(y);
            Ok(quad().integrate(f, dom.d0, x)?.value)
        }
    }
}

/// `(P phi R_lambda v)(x)`; `lambda = 0` gives the jump chain `K`.
pub fn chain_at(
    dynamics: &Dynamics,
    reset: &ResetKernel,
    lambda: f64,
    v: &dyn Fn(f64) -> f64,
    x: f64,
) -> Result<f64, QuadError> {
    let inner = |z: f64| phi_resolvent_at(dynamics, lambda, v, z).unwrap_or(f64::NAN);
    jump_at(reset, dynamics, &inner, x)
}
