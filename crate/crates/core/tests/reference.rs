use std::collections::BTreeMap;

use pdmp_core::model::ScenarioSpec;
use pdmp_core::numeric::Quadrature;
use pdmp_core::reference::{
    blas_counterexample_residual, exl1_series, friedman_density, mackey_ss_density, multiplicative_vstar,
    reference_ustar, reference_vstar, th_density, tyson_hannsgen_exponent, DivisionSeries, Normalization,
    ReferenceError,
};
use proptest::prelude::*;
use statrs::distribution::{Continuous, Gamma};

fn quad() -> Quadrature {
    Quadrature::with_tolerances(1e-15, 1e-12)
}

#[test]
fn exponent_solver() {
    assert!((tyson_hannsgen_exponent(2.0, 0.5).unwrap() - 2.0).abs() < 1e-10);
    let r = tyson_hannsgen_exponent(2.0, 0.25).unwrap();
    // Root from scipy's brentq on the same balance equation.
    assert!((r - 2.845_046_533_8).abs() < 1e-8, "r = {r}");
    assert!((2.0 - (r - 1.0) - 2.0 * 0.25f64.powf(r - 1.0)).abs() < 1e-12);
    assert!(matches!(tyson_hannsgen_exponent(1.0, 0.5), Err(ReferenceError::NoValidExponent(_))));
}

#[test]
fn power_law_density() {
    assert!((th_density(2.0, 0.5, 1.0) - 0.5).abs() < 1e-15);
    assert_eq!(th_density(2.0, 0.5, 0.5), 0.0);
    assert_eq!(th_density(2.0, 0.5, 0.3), 0.0);
    for (r, sigma) in [(2.0, 0.5), (2.845, 0.25), (3.5, 0.1)] {
        let total = quad().integrate(|x| th_density(r, sigma, x), sigma, f64::INFINITY).unwrap().value;
        assert!((total - 1.0).abs() < 1e-8, "r={r}: {total}");
    }
}

#[test]
fn bounded_support_density() {
    assert!((mackey_ss_density(2.0, 1.0, 0.75) - 2.0).abs() < 1e-14);
    assert_eq!(mackey_ss_density(2.0, 1.0, 0.5), 0.0);
    // 8 (x - 1/2) has antiderivative 4 (x - 1/2)^2.
    for x in [0.6, 0.9] {
        let part = quad().integrate(|y| mackey_ss_density(2.0, 1.0, y), 0.5, x).unwrap().value;
        assert!((part - 4.0 * (x - 0.5) * (x - 0.5)).abs() < 1e-12);
    }
    for (s, b) in [(2.0, 1.0), (3.0, 1.0), (1.0, 3.0)] {
        let total = quad().integrate(|x| mackey_ss_density(s, b, x), 0.5, 1.0).unwrap().value;
        assert!((total - 1.0).abs() < 1e-8, "S={s} b={b}: {total}");
    }
}

#[test]
fn series_solves_the_delay_equation() {
    let (alpha, b) = (1.0, 2.0);
    let s = DivisionSeries::new(alpha, b, 1e-15).unwrap();
    let xs: Vec<f64> = (1..=100).map(|i| 0.03 * i as f64).collect();
    let u = |x: f64| s.eval(x).unwrap().0;
    let peak = xs.iter().map(|&x| u(x)).fold(0.0, f64::max);
    for &x in &xs {
        let res = s.derivative(x).unwrap() + b * x.powf(alpha) * u(x) - 2.0 * b * (2.0 * x).powf(alpha) * u(2.0 * x);
        assert!(res.abs() <= 1e-8 * peak, "x={x}: {res}");
    }
    // Central difference as an independent check of the derivative.
    for x in [0.2, 0.7, 1.3] {
        let h = 1e-5;
        let fd = (u(x + h) - u(x - h)) / (2.0 * h);
        assert!((fd - s.derivative(x).unwrap()).abs() < 1e-7);
    }
    let total = quad().integrate(u, 0.0, f64::INFINITY).unwrap().value;
    assert!((total - 1.0).abs() < 1e-8);
    let tail: Vec<f64> = (0..40).map(|i| u(2.0 + 0.1 * i as f64)).collect();
    assert!(tail.windows(2).all(|w| w[1] <= w[0] && w[1] >= 0.0));
    assert_eq!(exl1_series(alpha, b, 0.4, 1e-15).unwrap().0, u(0.4));
}

#[test]
fn multiplicative_densities() {
    for (beta, b) in [(1.0, 1.0), (2.5, 0.7), (0.6, 3.0)] {
        let d = multiplicative_vstar(0.0, beta, b).unwrap();
        let law = Gamma::new(beta, b).unwrap();
        for x in [0.1, 0.8, 2.0, 5.0] {
            assert!((d.eval(x) - law.pdf(x)).abs() < 1e-9 * law.pdf(x).max(1.0), "beta={beta} b={b} x={x}");
        }
    }
    let d = multiplicative_vstar(1.0, 1.0, 1.0).unwrap();
    match d.normalization {
        Normalization::Numeric(c) => assert!((c - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-10),
        Normalization::Analytic => panic!("expected a numeric constant"),
    }
    assert!((d.eval(1.0) / d.eval(0.5) - (-0.375f64).exp()).abs() < 1e-12);
}

#[test]
fn gene_expression_densities() {
    let g = friedman_density(2.0, 0.0, f64::INFINITY, 1.0).unwrap();
    let law = Gamma::new(2.0, 1.0).unwrap();
    for x in [0.1, 1.0, 4.0] {
        assert!((g.eval(x) - law.pdf(x)).abs() < 1e-10);
    }
    let h = friedman_density(2.0, 0.1, 2.0, 1.0).unwrap();
    let shape = |x: f64| x.powf(1.2) * (-x).exp() / (1.0 + x * x);
    let c = 1.0 / quad().integrate(shape, 0.0, f64::INFINITY).unwrap().value;
    for x in [0.3, 1.0, 3.0] {
        assert!((h.eval(x) - c * shape(x)).abs() < 1e-10 * c);
    }
    assert_eq!(h.eval(0.0), 0.0);
}

#[test]
fn non_integrable_fixed_point() {
    for b in [1.0, 3.0] {
        assert!(blas_counterexample_residual(b, &[0.5, 1.0, 2.0]).unwrap() <= 1e-10);
    }
}

#[test]
fn builtin_references_are_densities() {
    let mut count = 0;
    for id in pdmp_core::model::builtin_ids() {
        let s = ScenarioSpec::builtin(id).unwrap();
        for d in [reference_vstar(&s).unwrap(), reference_ustar(&s).unwrap()].into_iter().flatten() {
            let m = d.total_mass().unwrap();
            assert!((m - 1.0).abs() < 1e-8, "{id}: {m}");
            count += 1;
        }
    }
    assert!(count >= 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exponent_is_a_nontrivial_root(b in 1.0f64..6.0, sigma in 0.02f64..0.35) {
        prop_assume!(b * (1.0 / sigma).ln() > 1.05);
        let r = tyson_hannsgen_exponent(b, sigma).unwrap();
        prop_assert!(r > 1.0 && r < b + 1.0);
        prop_assert!((b - (r - 1.0) - b * sigma.powf(r - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn reference_overrides_stay_normalized(alpha in 0.0f64..2.0, beta in 0.5f64..3.0, b in 0.5f64..3.0) {
        let o: BTreeMap<String, f64> = [("alpha", alpha), ("beta", beta), ("b", b)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let s = ScenarioSpec::builtin_with("multiplicative-beta", &o).unwrap();
        let d = reference_vstar(&s).unwrap().unwrap();
        prop_assert!((d.total_mass().unwrap() - 1.0).abs() < 1e-8);
    }
}
