//! Adaptive Gauss–Kronrod (21-point) quadrature and the embedded 10-point
//! Gauss–Legendre rule used for fixed per-cell integrals.

// Nodes and weights are quoted to the digits of the published tables.
#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// Finite interval and the integrand on it after a change of variable.
type Piece<'a> = (f64, f64, Box<dyn Fn(f64) -> f64 + 'a>);

/// Kronrod abscissae on [-1, 1], positive half; the last entry is the centre.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_059,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_114,
    0.562_757_134_668_604_683_339_000_099_272,
    0.433_395_394_129_247_190_799_265_943_165,
    0.294_392_862_701_460_198_131_126_603_103,
    0.148_874_338_981_631_210_884_826_001_129,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_244,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_325,
    0.123_491_976_262_065_851_077_208_980_803,
    0.134_709_217_311_473_325_928_054_001_771,
    0.142_775_938_577_060_080_797_094_273_138,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_389,
];

/// Gauss weights paired with `XGK[1], XGK[3], .., XGK[9]`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_657,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e}")]
    NoConvergence { estimate: f64, error: f64 },
}

/// Estimate and error bound of one adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Number of geometric pre-splits toward each finite endpoint. Useful for
    /// integrable endpoint singularities.
    pub end_refinement: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 4000, end_refinement: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod estimate with its embedded Gauss error estimate.
fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite { x: c });
    }
    let mut kron = fc * WGK[10];
    let mut gauss = 0.0;
    let mut abs_k = fc.abs() * WGK[10];
    for (i, (&x, &w)) in XGK[..10].iter().zip(WGK[..10].iter()).enumerate() {
        let (xl, xr) = (c - h * x, c + h * x);
        let (fl, fr) = (f(xl), f(xr));
        if !fl.is_finite() {
            return Err(QuadError::NonFinite { x: xl });
        }
        if !fr.is_finite() {
            return Err(QuadError::NonFinite { x: xr });
        }
        kron += w * (fl + fr);
        abs_k += w * (fl.abs() + fr.abs());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (fl + fr);
        }
    }
    let value = kron * h;
    let mut err = ((kron - gauss) * h).abs();
    // QUADPACK-style rescaling: the raw difference is pessimistic for smooth integrands.
    let asc = abs_k * h.abs();
    if asc > 0.0 && err > 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * asc;
    Ok((value, err.max(floor)))
}

impl Quadrature {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }

    /// Integrate `f` over `[a, b]`; either limit may be infinite and `a > b`
    /// flips the sign.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<QuadResult, QuadError> {
        self.integrate_with_breaks(f, a, b, &[])
    }

    /// As [`Quadrature::integrate`], splitting first at interior `breaks`
    /// (kinks or jumps of the integrand).
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        b: f64,
        breaks: &[f64],
    ) -> Result<QuadResult, QuadError> {
        if a == b {
            return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
        }
        if a > b {
            let r = self.integrate_with_breaks(f, b, a, breaks)?;
            return Ok(QuadResult { value: -r.value, ..r });
        }
        let mut points = vec![a];
        let mut inner: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b && p.is_finite()).collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        points.extend(inner);
        points.push(b);

        // Each piece is mapped to a finite interval in a transformed variable.
        let mut pieces: Vec<Piece<'_>> = Vec::new();
        for w in points.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let f = &f;
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => pieces.push((lo, hi, Box::new(f))),
                (true, false) => pieces.push((
                    0.0,
                    1.0,
                    Box::new(move |t: f64| {
                        let s = 1.0 - t;
                        let x = lo + t / s;
                        if x.is_finite() { f(x) / (s * s) } else { 0.0 }
                    }),
                )),
                (false, true) => pieces.push((
                    0.0,
                    1.0,
                    Box::new(move |t: f64| {
                        let s = 1.0 - t;
                        let x = hi - t / s;
                        if x.is_finite() { f(x) / (s * s) } else { 0.0 }
                    }),
                )),
                (false, false) => {
                    pieces.push((
                        0.0,
                        1.0,
                        Box::new(move |t: f64| {
                            let s = 1.0 - t;
                            let x = -t / s;
                            if x.is_finite() { f(x) / (s * s) } else { 0.0 }
                        }),
                    ));
                    pieces.push((
                        0.0,
                        1.0,
                        Box::new(move |t: f64| {
                            let s = 1.0 - t;
                            let x = t / s;
                            if x.is_finite() { f(x) / (s * s) } else { 0.0 }
                        }),
                    ));
                }
            }
        }

        let mut heap = BinaryHeap::new();
        let mut evaluations = 0;
        for (idx, (lo, hi, g)) in pieces.iter().enumerate() {
            for (sa, sb) in self.initial_split(*lo, *hi) {
                let (value, error) = kronrod21(g, sa, sb)?;
                evaluations += 21;
                heap.push((Segment { a: sa, b: sb, value, error }, idx));
            }
        }

        // Segments that cannot be bisected further keep their contribution here.
        let (mut frozen_value, mut frozen_error) = (0.0, 0.0);
        loop {
            let total = frozen_value + heap.iter().map(|(s, _)| s.value).sum::<f64>();
            let err = frozen_error + heap.iter().map(|(s, _)| s.error).sum::<f64>();
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if err <= target {
                return Ok(QuadResult { value: total, error: err, evaluations });
            }
            let Some((worst, idx)) = heap.pop() else {
                return Err(QuadError::NoConvergence { estimate: total, error: err });
            };
            if heap.len() + 1 >= self.max_intervals {
                return Err(QuadError::NoConvergence { estimate: total, error: err });
            }
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) || (worst.b - worst.a) <= 4.0 * f64::EPSILON * mid.abs() {
                frozen_value += worst.value;
                frozen_error += worst.error;
                continue;
            }
            let g = &pieces[idx].2;
            let (v1, e1) = kronrod21(g, worst.a, mid)?;
            let (v2, e2) = kronrod21(g, mid, worst.b)?;
            evaluations += 42;
            heap.push((Segment { a: worst.a, b: mid, value: v1, error: e1 }, idx));
            heap.push((Segment { a: mid, b: worst.b, value: v2, error: e2 }, idx));
        }
    }

    fn initial_split(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let k = self.end_refinement;
        if k == 0 {
            return vec![(a, b)];
        }
        let half = 0.5 * (b - a);
        let mut pts = vec![a, a + half, b];
        for i in 1..=k {
            let d = half * 0.5f64.powi(i as i32);
            pts.push(a + d);
            pts.push(b - d);
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Integrate with default tolerances (abs 1e-12, rel 1e-10).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64, QuadError> {
    Quadrature::default().integrate(f, a, b).map(|r| r.value)
}

/// 10-point Gauss–Legendre rule on a finite interval.
pub fn gauss_legendre10<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..5 {
        let x = XGK[2 * k + 1];
        s += WG[k] * (f(c - h * x) + f(c + h * x));
    }
    s * h
}

/// Nodes and weights of the 10-point rule mapped onto `[a, b]`.
pub fn gauss_legendre10_nodes(a: f64, b: f64) -> [(f64, f64); 10] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 10];
    for k in 0..5 {
        let x = XGK[2 * k + 1];
        out[2 * k] = (c - h * x, WG[k] * h);
        out[2 * k + 1] = (c + h * x, WG[k] * h);
    }
    out
}

/// Gauss–Legendre over `[a, b]` after splitting at the `breaks` inside it.
pub fn gauss_legendre10_split<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut lo = a;
    let mut s = 0.0;
    for &p in breaks.iter().filter(|&&p| p > a && p < b) {
        s += gauss_legendre10(&f, lo, p);
        lo = p;
    }
    s + gauss_legendre10(&f, lo, b)
}
