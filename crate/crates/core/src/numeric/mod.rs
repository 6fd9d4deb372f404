//! Numerical building blocks: quadrature, root finding, goodness of fit.

pub mod ks;
pub mod quadrature;
pub mod roots;

pub use quadrature::{gauss_legendre10, gauss_legendre10_nodes, gauss_legendre10_split, integrate, QuadError, QuadResult, Quadrature};
pub use ks::{kolmogorov_sf, ks_pvalue, ks_statistic};
pub use roots::{bisect, bracket_increasing, solve_increasing, RootError};

/// `a - b` for extended reals with the convention `inf - inf = 0`, used for
/// exponents of survival factors that reach the same endpoint.
pub fn ext_sub(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}
