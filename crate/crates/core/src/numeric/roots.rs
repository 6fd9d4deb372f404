//! Bracketed root finding for monotone scalar functions.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {flo}, f(hi) = {fhi}")]
    NoSignChange { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("function not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("target {target} could not be bracketed")]
    Unbracketed { target: f64 },
}

/// Plain bisection on a sign-changing bracket until the bracket is no wider
/// than `tol` or `max_iter` halvings have been made.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64, RootError> {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (mut fa, fb) = (f(a), f(b));
    if !fa.is_finite() {
        return Err(RootError::NonFinite { x: a });
    }
    if !fb.is_finite() {
        return Err(RootError::NonFinite { x: b });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange { lo: a, hi: b, flo: fa, fhi: fb });
    }
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        if b - a <= tol || m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if !fm.is_finite() {
            return Err(RootError::NonFinite { x: m });
        }
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Solve `f(x) = target` for nondecreasing `f` on the bracket `[lo, hi]`
/// (`f(lo) <= target <= f(hi)`), with Illinois false position safeguarded by
/// bisection. Stops at relative bracket width `rel_tol`.
pub fn solve_increasing<F: Fn(f64) -> f64>(
    f: F,
    target: f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64, RootError> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a) - target;
    let mut fb = f(b) - target;
    if fa.is_nan() || fb.is_nan() {
        return Err(RootError::NonFinite { x: if fa.is_nan() { a } else { b } });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa > 0.0 || fb < 0.0 {
        return Err(RootError::NoSignChange { lo: a, hi: b, flo: fa, fhi: fb });
    }
    let mut side = 0i8;
    for _ in 0..400 {
        let width = b - a;
        if width <= rel_tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        let mut x = if fa.is_finite() && fb.is_finite() { (a * fb - b * fa) / (fb - fa) } else { f64::NAN };
        // Fall back to bisection when the secant leaves the bracket or hugs an end.
        let guard = 0.05 * width;
        if !(x > a + guard && x < b - guard) {
            x = 0.5 * (a + b);
        }
        if x <= a || x >= b {
            break;
        }
        let fx = f(x) - target;
        if fx.is_nan() {
            return Err(RootError::NonFinite { x });
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if fa.abs() <= fb.abs() && fa.is_finite() { a } else if fb.is_finite() { b } else { 0.5 * (a + b) })
}

/// Find a bracket `[lo, hi]` inside `(d0, d1)` with `f(lo) <= target <= f(hi)`
/// for nondecreasing `f`, stepping out geometrically from `start`. Endpoints
/// are approached by repeated halving of the remaining distance.
pub fn bracket_increasing<F: Fn(f64) -> f64>(
    f: &F,
    target: f64,
    start: f64,
    d0: f64,
    d1: f64,
) -> Result<(f64, f64), RootError> {
    let fs = f(start);
    if fs.is_nan() {
        return Err(RootError::NonFinite { x: start });
    }
    let step_toward = |x: f64, end: f64, k: i32| -> f64 {
        if end.is_finite() {
            end - (end - start) * 0.5f64.powi(k)
        } else {
            let scale = start.abs().max(1.0);
            x + end.signum() * scale * 2f64.powi(k)
        }
    };
    if fs <= target {
        let mut lo = start;
        for k in 1..1100 {
            let x = step_toward(start, d1, k);
            if !(x < d1) || x == lo {
                break;
            }
            let fx = f(x);
            if fx >= target {
                return Ok((lo, x));
            }
            lo = x;
        }
    } else {
        let mut hi = start;
        for k in 1..1100 {
            let x = step_toward(start, d0, k);
            if !(x > d0) || x == hi {
                break;
            }
            let fx = f(x);
            if fx <= target {
                return Ok((x, hi));
            }
            hi = x;
        }
    }
    Err(RootError::Unbracketed { target })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn illinois_on_exp() {
        let r = solve_increasing(f64::exp, 10.0, 0.0, 5.0, 1e-14).unwrap();
        assert!((r - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bracket_to_infinity_and_zero() {
        let f = |x: f64| x.ln();
        let (lo, hi) = bracket_increasing(&f, 30.0, 1.0, 0.0, f64::INFINITY).unwrap();
        assert!(lo.ln() <= 30.0 && hi.ln() >= 30.0);
        let (lo, hi) = bracket_increasing(&f, -30.0, 1.0, 0.0, f64::INFINITY).unwrap();
        assert!(lo.ln() <= -30.0 && hi.ln() >= -30.0);
    }

    #[test]
    fn no_sign_change() {
        assert!(matches!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100), Err(RootError::NoSignChange { .. })));
    }
}
