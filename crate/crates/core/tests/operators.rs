use std::collections::BTreeMap;
use std::sync::Arc;

use pdmp_core::grid::{Grid, GridDensity, GridKind, GridSpec};
use pdmp_core::model::{
    BurstLaw, Dynamics, FlowKind, FlowModel, FractionLaw, HazardKind, HazardModel, Orientation, ResetKernel,
    ScenarioSpec, StateDomain,
};
use pdmp_core::numeric::Quadrature;
use pdmp_core::operators::pointwise::{chain_at, phi_resolvent_at, resolvent_at};
use pdmp_core::operators::{
    apply_p, apply_p0, apply_phi_r0, apply_s, build_jump, build_k, build_phi_resolvent, build_resolvent,
    check_blas, check_partial_integrality, check_subinvariance, invariant_density, lift_to_continuous,
    resolvent_apply, BlasVerdict, InvariantOptions, OperatorError, PartialIntegrality,
};
use pdmp_core::pde::Stepper;
use pdmp_core::reference::{mackey_ss_density, reference_ustar, reference_vstar, th_density};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn builtin(id: &str, overrides: &[(&str, f64)]) -> ScenarioSpec {
    let o: BTreeMap<String, f64> = overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    ScenarioSpec::builtin_with(id, &o).unwrap()
}

fn uniform_grid(n: usize, a: f64, b: f64) -> Arc<Grid> {
    GridSpec::new(GridKind::Uniform, n, a, b).build().unwrap()
}

fn dynamics(flow: FlowKind, hazard: HazardKind) -> Dynamics {
    let f = FlowModel::new(flow, StateDomain::new(0.0, f64::INFINITY, Orientation::Growth).unwrap(), None).unwrap();
    let h = HazardModel::new(hazard, &f, None).unwrap();
    Dynamics::new(f, h)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Density of a grid function that is flat within each cell.
fn step_function(d: &GridDensity) -> impl Fn(f64) -> f64 + '_ {
    move |x| match d.grid().locate(x) {
        Some(i) => d.masses()[i] / d.grid().width(i),
        None => 0.0,
    }
}

/// Unit mass spread evenly over cell `j`.
fn cell_source(grid: &Arc<Grid>, j: usize) -> GridDensity {
    let mut m = vec![0.0; grid.n()];
    m[j] = 1.0;
    GridDensity::new(grid.clone(), m).unwrap()
}

fn random_density(grid: Arc<Grid>, seed: u64) -> GridDensity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m: Vec<f64> = (0..grid.n()).map(|_| rng.random::<f64>()).collect();
    GridDensity::new(grid, m).unwrap().normalized().unwrap()
}

#[test]
fn transport_shifts_uniform_block() {
    let grid = uniform_grid(400, 0.0, 4.0);
    let flow = FlowModel::new(FlowKind::Constant { k: 1.0 }, StateDomain::new(-1.0, f64::INFINITY, Orientation::Growth).unwrap(), None)
        .unwrap();
    let u = GridDensity::from_density_fn(grid.clone(), &|x| if x < 1.0 { 1.0 } else { 0.0 }, &[1.0]);
    assert_eq!(apply_p0(&flow, 0.0, &u).unwrap().masses(), u.masses());
    let moved = apply_p0(&flow, 0.5, &u).unwrap();
    let want = GridDensity::from_density_fn(grid, &|x| if (0.5..1.5).contains(&x) { 1.0 } else { 0.0 }, &[0.5, 1.5]);
    assert!(l1(moved.masses(), want.masses()) < 1e-12);
    assert!((moved.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn transport_conserves_mass_before_truncation() {
    for id in ["power-phi", "tyson-hannsgen", "mackey-ss86", "friedman-hill"] {
        let s = builtin(id, &[]);
        let u = random_density(s.grid.build().unwrap(), 3);
        let out = apply_p0(&s.dynamics.flow, 0.37, &u).unwrap();
        let total = out.total_mass() + out.leakage.total();
        assert!((total - 1.0).abs() < 1e-8, "{id}: {total}");
    }
}

#[test]
fn survival_reduces_to_transport_without_hazard() {
    let d = dynamics(FlowKind::Linear { k: 1.0 }, HazardKind::Zero);
    let u = random_density(GridSpec::new(GridKind::Log, 200, 0.01, 100.0).build().unwrap(), 5);
    assert_eq!(apply_s(&d, 0.8, &u).unwrap().masses(), apply_p0(&d.flow, 0.8, &u).unwrap().masses());
}

#[test]
fn constant_hazard_discounts_mass() {
    let d = dynamics(FlowKind::Constant { k: 1.0 }, HazardKind::Constant { p: 0.7 });
    let u = GridDensity::from_density_fn(uniform_grid(500, 0.0, 10.0), &|x| (-(x - 3.0) * (x - 3.0)).exp(), &[]);
    let u = u.normalized().unwrap();
    let out = apply_s(&d, 1.5, &u).unwrap();
    let expected = (-0.7f64 * 1.5).exp();
    assert!((out.total_mass() + out.leakage.total() - expected).abs() < 1e-10);
}

#[test]
fn resolvent_of_exponential_source() {
    let d = dynamics(FlowKind::Constant { k: 1.0 }, HazardKind::Zero);
    let grid = uniform_grid(2048, 0.0, 30.0);
    let v = GridDensity::from_density_fn(grid.clone(), &|y| (-y).exp(), &[]);
    let r = resolvent_apply(&d, 1.0, &v).unwrap();
    let want = GridDensity::from_density_fn(grid, &|x| x * (-x).exp(), &[]);
    assert!(l1(r.masses(), want.masses()) < 1e-4);
    let zero = GridDensity::zeros(v.grid().clone());
    assert!(resolvent_apply(&d, 1.0, &zero).unwrap().masses().iter().all(|&m| m == 0.0));
    assert!(matches!(resolvent_apply(&d, 0.0, &v), Err(OperatorError::InvalidArgument(_))));
}

/// Cell integrals of an image with kinks at `breaks`.
fn cell_integrals_with(grid: &Grid, f: &dyn Fn(f64) -> f64, breaks: &[f64]) -> Vec<f64> {
    let q = Quadrature::with_tolerances(1e-15, 1e-12);
    (0..grid.n()).map(|i| q.integrate_with_breaks(f, grid.left(i), grid.right(i), breaks).unwrap().value).collect()
}

#[test]
fn occupation_matrices_integrate_kernels_exactly() {
    // Unit speed and hazard p x^alpha: Q(x) = p x^(alpha+1) / (alpha+1).
    let (p, alpha) = (0.8, 0.5);
    let d = dynamics(FlowKind::Constant { k: 1.0 }, HazardKind::Power { p, alpha });
    let big_q = move |x: f64| p * x.powf(alpha + 1.0) / (alpha + 1.0);
    let grid = uniform_grid(24, 0.1, 6.0);
    let q = Quadrature::with_tolerances(1e-15, 1e-12);
    for j in [0, 9, 20] {
        let v = cell_source(&grid, j);
        let (a, b) = (grid.left(j), grid.right(j));
        for lambda in [0.0, 0.5, 2.0] {
            let r = move |x: f64| {
                if x <= a {
                    return 0.0;
                }
                let f = |y: f64| (-lambda * (x - y) - (big_q(x) - big_q(y))).exp() / (b - a);
                q.integrate(f, a, b.min(x)).unwrap().value
            };
            let want = cell_integrals_with(&grid, &r, &[a, b]);
            let got = build_resolvent(&d, grid.clone(), lambda).apply(&v).unwrap();
            assert!(l1(got.masses(), &want) < 1e-10, "R_{lambda} column {j}: {}", l1(got.masses(), &want));
            let want = cell_integrals_with(&grid, &|x| p * x.powf(alpha) * r(x), &[a, b]);
            let got = build_phi_resolvent(&d, grid.clone(), lambda).apply(&v).unwrap();
            assert!(l1(got.masses(), &want) < 1e-10, "phi R_{lambda} column {j}: {}", l1(got.masses(), &want));
        }
    }
}

#[test]
fn pointwise_resolvent_matches_matrix_on_smooth_sources() {
    let d = dynamics(FlowModel::custom("1+x/2", |x: f64| 1.0 + 0.5 * x), HazardKind::Power { p: 0.8, alpha: 0.5 });
    let grid = uniform_grid(2048, 1e-9, 12.0);
    let v = |y: f64| y * (-y).exp();
    let vd = GridDensity::from_density_fn(grid.clone(), &v, &[]);
    let r = build_resolvent(&d, grid.clone(), 1.0).apply(&vd).unwrap();
    for i in (50..grid.n()).step_by(250) {
        let pw = resolvent_at(&d, 1.0, &v, grid.center(i)).unwrap();
        let cell = r.masses()[i] / grid.width(i);
        assert!((pw - cell).abs() < 1e-4 * pw.abs().max(1e-3), "x={}: {pw} vs {cell}", grid.center(i));
        let pw_phi = phi_resolvent_at(&d, 1.0, &v, grid.center(i)).unwrap();
        assert!((pw_phi - d.phi(grid.center(i)) * pw).abs() < 1e-10);
    }
}

/// First-jump position `q(z) int_{max(a,d0)}^{min(b,z)} exp(Q(y) - Q(z)) dy / (b - a)`.
fn first_jump(q: &dyn Fn(f64) -> f64, big_q: &dyn Fn(f64) -> f64, a: f64, b: f64, z: f64) -> f64 {
    if z <= a {
        return 0.0;
    }
    let quad = Quadrature::with_tolerances(1e-15, 1e-12);
    q(z) * quad.integrate(|y| (big_q(y) - big_q(z)).exp() / (b - a), a, b.min(z)).unwrap().value
}

#[test]
fn chain_matrices_integrate_kernels_exactly() {
    // power-phi defaults: speed 1, hazard 2x, halving reset.
    let s = builtin("power-phi", &[]);
    let grid = uniform_grid(32, 1e-9, 4.0);
    let k = build_k(&s, grid.clone()).unwrap();
    for j in [3, 16, 28] {
        let v = cell_source(&grid, j);
        let (a, b) = (grid.left(j), grid.right(j));
        let kx = |x: f64| 2.0 * first_jump(&|z| 2.0 * z, &|z| z * z, a, b, 2.0 * x);
        let want = cell_integrals_with(&grid, &kx, &[a / 2.0, b / 2.0]);
        let got = k.apply(&v).unwrap();
        assert!(l1(got.masses(), &want) < 1e-12, "power-phi column {j}: {}", l1(got.masses(), &want));
    }

    // tyson-hannsgen defaults: speed x, hazard 2 above 1, halving reset.
    let s = builtin("tyson-hannsgen", &[]);
    let grid = GridSpec::new(GridKind::Log, 32, 0.5 + 1e-12, 16.0).build().unwrap();
    let k = build_k(&s, grid.clone()).unwrap();
    for j in [3, 16, 28] {
        let v = cell_source(&grid, j);
        let (a, b) = (grid.left(j), grid.right(j));
        let q = |z: f64| if z >= 1.0 { 2.0 / z } else { 0.0 };
        let big_q = |z: f64| 2.0 * z.max(1.0).ln();
        let kx = |x: f64| 2.0 * first_jump(&q, &big_q, a, b, 2.0 * x);
        let want = cell_integrals_with(&grid, &kx, &[a / 2.0, b / 2.0, 0.5]);
        let got = k.apply(&v).unwrap();
        assert!(l1(got.masses(), &want) < 1e-12, "tyson-hannsgen column {j}: {}", l1(got.masses(), &want));
    }

}

#[test]
fn jump_matrices_integrate_kernels_exactly() {
    let quad = Quadrature::with_tolerances(1e-15, 1e-12);
    // Retained fraction density 2t: P w(x) = int_x^inf 2 (x / y) w(y) / y dy.
    let s = builtin("multiplicative-beta", &[]);
    let grid = uniform_grid(32, 1e-9, 8.0);
    let p = build_jump(&s.reset, &s.dynamics, grid.clone());
    for j in [3, 16, 28] {
        let (a, b) = (grid.left(j), grid.right(j));
        let px = |x: f64| if x >= b { 0.0 } else { quad.integrate(|y| 2.0 * x / (y * y) / (b - a), x.max(a), b).unwrap().value };
        let want = cell_integrals_with(&grid, &px, &[a, b]);
        let got = p.apply(&cell_source(&grid, j)).unwrap();
        assert!(l1(got.masses(), &want) < 1e-12, "beta-power column {j}: {}", l1(got.masses(), &want));
    }

    // Exponential bursts of mean 1: P w(x) = int_0^x exp(y - x) w(y) dy.
    let s = builtin("friedman-const", &[]);
    let grid = GridSpec::new(GridKind::Log, 32, 1e-3, 30.0).build().unwrap();
    let p = build_jump(&s.reset, &s.dynamics, grid.clone());
    for j in [3, 16, 28] {
        let (a, b) = (grid.left(j), grid.right(j));
        let px = |x: f64| if x <= a { 0.0 } else { quad.integrate(|y| (y - x).exp() / (b - a), a, b.min(x)).unwrap().value };
        let want = cell_integrals_with(&grid, &px, &[a, b]);
        let got = p.apply(&cell_source(&grid, j)).unwrap();
        assert!(l1(got.masses(), &want) < 1e-12, "burst column {j}: {}", l1(got.masses(), &want));
    }
}

#[test]
fn occupation_columns_match_closed_form() {
    // Hazard s (x - 1) on (1, 2) with unit speed: Q jumps from 0 to s / 2.
    let s = 1.3;
    let d = dynamics(FlowKind::Constant { k: 1.0 }, HazardKind::Step { s });
    let grid = uniform_grid(60, 1e-9, 3.0);
    let k = build_phi_resolvent(&d, grid.clone(), 0.0);
    let total = s / 2.0;
    for j in 0..grid.n() {
        let (a, b) = (grid.left(j), grid.right(j));
        // Cell average of 1 - exp(Q(y) - Q(inf)) for a flat source.
        let q = |y: f64| if y <= 1.0 { 0.0 } else if y >= 2.0 { total } else { s * (y - 1.0).powi(2) / 2.0 };
        let want = Quadrature::default().integrate(|y| 1.0 - (q(y) - total).exp(), a, b).unwrap().value / (b - a);
        assert!((k.column_mass()[j] - want).abs() < 1e-6, "column {j}");
    }

    let th = builtin("tyson-hannsgen", &[]);
    let k = build_phi_resolvent(&th.dynamics, th.grid.build().unwrap(), 0.0);
    assert!((k.column_mass()[0] + k.column_leakage(0).total() - 1.0).abs() < 1e-9);
    let stats = k.stats();
    assert!(stats.min_accounted > 1.0 - 1e-9 && stats.max_accounted < 1.0 + 1e-9);
}

#[test]
fn jump_operators_move_mass_as_expected() {
    let grid = uniform_grid(400, 1e-9, 4.0);
    let lin = dynamics(FlowKind::Constant { k: 1.0 }, HazardKind::Constant { p: 1.0 });
    let half = builtin("power-phi", &[]).reset;
    let u = GridDensity::from_density_fn(grid.clone(), &|x| if (1.0..2.0).contains(&x) { 1.0 } else { 0.0 }, &[1.0, 2.0]);
    let out = apply_p(&half, &lin, &u).unwrap();
    let want = GridDensity::from_density_fn(grid.clone(), &|x| if (0.5..1.0).contains(&x) { 2.0 } else { 0.0 }, &[0.5, 1.0]);
    assert!(l1(out.masses(), want.masses()) < 1e-12);

    // Uniform retained fraction of a narrow block at 1 spreads over (0, 1).
    let uniform_fraction = ResetKernel::Multiplicative(FractionLaw::BetaPower { beta: 1.0 });
    let narrow = GridDensity::point_mass(grid.clone(), 1.0 + 1e-6).unwrap();
    let out = apply_p(&uniform_fraction, &lin, &narrow).unwrap();
    let want = GridDensity::from_density_fn(grid.clone(), &|x| if x < 1.0 { 1.0 } else { 0.0 }, &[1.0]);
    assert!(l1(out.masses(), want.masses()) < 0.02);

    let decay = Dynamics::new(
        FlowModel::new(FlowKind::LinearDecay { gamma: 1.0 }, StateDomain::new(0.0, f64::INFINITY, Orientation::Decay).unwrap(), None)
            .unwrap(),
        HazardModel::new(
            HazardKind::Constant { p: 1.0 },
            &FlowModel::new(FlowKind::LinearDecay { gamma: 1.0 }, StateDomain::new(0.0, f64::INFINITY, Orientation::Decay).unwrap(), None)
                .unwrap(),
            None,
        )
        .unwrap(),
    );
    let burst = ResetKernel::AdditiveBurst(BurstLaw::Exponential { mean: 1.0 });
    let grid = uniform_grid(800, 1e-9, 20.0);
    let at_zero = GridDensity::point_mass(grid.clone(), 1e-6).unwrap();
    let out = apply_p(&burst, &decay, &at_zero).unwrap();
    let want = GridDensity::from_density_fn(grid, &|x| (-x).exp(), &[]);
    assert!(l1(out.masses(), want.masses()) < 0.03);
}

#[test]
fn division_operator_specializations() {
    let u = |y: f64| 1.0 + (3.0 * y).sin().powi(2);
    let q = Quadrature::with_tolerances(1e-14, 1e-12);
    // Cell-cycle form: 2 h(2x) int_0^{2x} exp(-int_y^{2x} h) u(y) dy with h = phi / g.
    let closed = |h: &dyn Fn(f64) -> f64, hh: &dyn Fn(f64, f64) -> f64, x: f64| {
        2.0 * h(2.0 * x) * q.integrate(|y| (-hh(y, 2.0 * x)).exp() * u(y), 0.0, 2.0 * x).unwrap().value
    };
    let pp = builtin("power-phi", &[("alpha", 1.0), ("b", 2.0)]);
    let h = |z: f64| 2.0 * z;
    let hh = |y: f64, w: f64| w * w - y * y;
    for x in [0.2, 0.7, 1.3, 2.1] {
        let k = chain_at(&pp.dynamics, &pp.reset, 0.0, &u, x).unwrap();
        assert!((k - closed(&h, &hh, x)).abs() < 1e-10, "power-phi x={x}");
    }
    let ms = builtin("mackey-ss86", &[]);
    let (s, b) = (2.0, 1.0);
    let h = move |z: f64| if z > 1.0 { s * b * (z - 1.0) / (z * (2.0 - z)) } else { 0.0 };
    let lq = move |z: f64| if z > 1.0 { -0.5 * s * b * (z * (2.0 - z)).ln() } else { 0.0 };
    let hh = move |y: f64, w: f64| lq(w) - lq(y);
    for x in [0.55, 0.7, 0.85, 0.95] {
        let k = chain_at(&ms.dynamics, &ms.reset, 0.0, &u, x).unwrap();
        assert!((k - closed(&h, &hh, x)).abs() < 1e-10, "bounded support x={x}");
    }
}

#[test]
fn loglinear_chain_matches_closed_operator() {
    let b = 1.5;
    let s = builtin("loglinear", &[("b", b)]);
    let u = |y: f64| (-y).exp();
    let q = Quadrature::with_tolerances(1e-14, 1e-12);
    for x in [0.3f64, 1.0, 2.5] {
        let closed = b / (2f64.powf(b) * x.powf(b + 1.0)) * q.integrate(|y| y.powf(b) * u(y), 0.0, 2.0 * x).unwrap().value;
        let k = chain_at(&s.dynamics, &s.reset, 0.0, &u, x).unwrap();
        assert!((k - closed).abs() < 1e-10 * closed, "x={x}");
    }
}

#[test]
fn invariant_densities_match_closed_forms() {
    let th = builtin("tyson-hannsgen", &[]);
    let grid = th.grid.build().unwrap();
    let v = invariant_density(&build_k(&th, grid.clone()).unwrap(), &InvariantOptions::default()).unwrap().density;
    let want = GridDensity::from_density_fn(grid, &|x| th_density(2.0, 0.5, x), &[1.0]);
    assert!(l1(v.masses(), want.masses()) < 1e-3);

    let mb = builtin("multiplicative-beta", &[]);
    let grid = mb.grid.with_n(4096).build().unwrap();
    let v = invariant_density(&build_k(&mb, grid.clone()).unwrap(), &InvariantOptions::default()).unwrap().density;
    let (m, out) = reference_vstar(&mb).unwrap().unwrap().cell_masses(&grid).unwrap();
    assert!(v.l1_to_masses(&m, out) < 1e-3);
}

#[test]
fn reference_fixed_points_have_small_residual() {
    for id in ["tyson-hannsgen", "mackey-ss86", "multiplicative-beta"] {
        let s = builtin(id, &[]);
        let grid = s.grid.with_n(4096).build().unwrap();
        let r = reference_vstar(&s).unwrap().unwrap();
        let (m, _) = r.cell_masses(&grid).unwrap();
        let v = GridDensity::new(grid.clone(), m).unwrap();
        let kv = build_k(&s, grid).unwrap().apply(&v).unwrap();
        let rel = l1(kv.masses(), v.masses()) / v.total_mass();
        assert!(rel < 1e-3, "{id}: {rel}");
    }
}

#[test]
fn invariant_grid_convergence_is_at_least_first_order() {
    type Case<'a> = (&'a str, &'a dyn Fn(f64) -> f64, &'a [f64]);
    let cases: [Case; 2] = [
        ("tyson-hannsgen", &|x| th_density(2.0, 0.5, x), &[1.0]),
        ("mackey-ss86", &|x| mackey_ss_density(2.0, 1.0, x), &[1.0]),
    ];
    for (id, exact, breaks) in cases {
        let s = builtin(id, &[]);
        let errs: Vec<f64> = [1024, 2048, 4096]
            .iter()
            .map(|&n| {
                let grid = s.grid.with_n(n).build().unwrap();
                let v = invariant_density(&build_k(&s, grid.clone()).unwrap(), &InvariantOptions::default()).unwrap().density;
                l1(v.masses(), GridDensity::from_density_fn(grid, exact, breaks).masses())
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) && (w[0] / w[1] >= 1.5 || w[1] < 1e-9), "{id}: {errs:?}");
        }
    }
}

#[test]
fn power_iteration_ignores_start() {
    for id in ["tyson-hannsgen", "friedman-hill", "mackey-ss86"] {
        let s = builtin(id, &[]);
        let grid = s.grid.with_n(512).build().unwrap();
        let k = build_k(&s, grid.clone()).unwrap();
        let runs: Vec<GridDensity> = (0..3)
            .map(|seed| {
                let start = Some(random_density(grid.clone(), 100 + seed).into_masses());
                invariant_density(&k, &InvariantOptions { start, ..Default::default() }).unwrap().density
            })
            .collect();
        for r in &runs[1..] {
            assert!(l1(r.masses(), runs[0].masses()) < 1e-8, "{id}");
        }
    }
}

#[test]
fn loglinear_has_no_invariant_density() {
    for b in [1.0, 2.0, 3.0] {
        let s = builtin("loglinear", &[("b", b)]);
        let k = build_k(&s, s.grid.build().unwrap()).unwrap();
        assert!(matches!(invariant_density(&k, &InvariantOptions::default()), Err(OperatorError::NoInvariant { .. })), "b={b}");
    }
}

#[test]
fn lift_identities() {
    let mb = builtin("multiplicative-beta", &[]);
    let grid = mb.grid.build().unwrap();
    let v = invariant_density(&build_k(&mb, grid.clone()).unwrap(), &InvariantOptions::default()).unwrap().density;
    let r0 = build_resolvent(&mb.dynamics, grid.clone(), 0.0).apply(&v).unwrap();
    let beta = 2.0;
    let xv = GridDensity::from_density_fn(grid.clone(), &|x| x * step_function(&v)(x) / (beta * mb.dynamics.g(x)), &[]);
    let rel = l1(r0.masses(), xv.masses()) / xv.total_mass();
    assert!(rel < 1e-3, "relative {rel}");

    let pp = builtin("power-phi", &[]);
    let grid = pp.grid.build().unwrap();
    let v = invariant_density(&build_k(&pp, grid.clone()).unwrap(), &InvariantOptions::default()).unwrap().density;
    let u = lift_to_continuous(&pp.dynamics, &v).unwrap();
    let (m, out) = reference_ustar(&pp).unwrap().unwrap().cell_masses(&grid).unwrap();
    assert!(u.l1_to_masses(&m, out) < 1e-3);

    let zero = GridDensity::zeros(grid);
    assert!(matches!(lift_to_continuous(&pp.dynamics, &zero), Err(OperatorError::NotIntegrable(_)) | Err(OperatorError::Grid(_))));
}

#[test]
fn subinvariance_verdicts() {
    let s = builtin("loglinear", &[("b", 1.0)]);
    let grid = s.grid.build().unwrap();
    let u = GridDensity::from_density_fn(grid.clone(), &|x| (-x).exp(), &[]);
    assert!(check_subinvariance(&s, &u, 1.0).unwrap().holds);

    let mut no_hazard = builtin("power-phi", &[]);
    no_hazard.dynamics = dynamics(FlowKind::Constant { k: 1.0 }, HazardKind::Zero);
    let u = GridDensity::uniform(no_hazard.grid.build().unwrap());
    let out = check_subinvariance(&no_hazard, &u, 1.0).unwrap();
    assert!(out.holds);
}

#[test]
fn blas_verdicts() {
    let pp = builtin("power-phi", &[("alpha", 0.0), ("b", 1.0)]);
    assert!(matches!(check_blas(&pp), BlasVerdict::StableInvariantExists { .. }));
    assert!(matches!(check_blas(&builtin("loglinear", &[])), BlasVerdict::Inconclusive { .. }));
    let mut no_hazard = pp.clone();
    no_hazard.dynamics = dynamics(FlowKind::Constant { k: 1.0 }, HazardKind::Zero);
    assert!(matches!(check_blas(&no_hazard), BlasVerdict::Inconclusive { .. }));
}

#[test]
fn partial_integrality_verdicts() {
    let verdict = |id: &str| {
        let s = builtin(id, &[]);
        check_partial_integrality(&s, &s.grid.build().unwrap())
    };
    assert!(matches!(verdict("power-phi"), PartialIntegrality::Witness { .. }));
    assert!(matches!(verdict("mackey-ss86"), PartialIntegrality::Witness { .. }));
    assert!(matches!(verdict("tyson-hannsgen"), PartialIntegrality::NotPartiallyIntegral { .. }));
    assert_eq!(verdict("friedman-const"), PartialIntegrality::NotApplicable);
}

#[test]
fn one_pde_step_is_consistent_with_duhamel() {
    // One step against S(t)u + t P(phi u): the defect is second order in t.
    let s = builtin("power-phi", &[("alpha", 1.0), ("b", 2.0)]);
    let grid = s.grid.build().unwrap();
    let u = GridDensity::from_density_fn(grid.clone(), &|x| x * (-x * x).exp(), &[]).normalized().unwrap();
    let defect = |t: f64| {
        let mut m = u.masses().to_vec();
        Stepper::new(&s, grid.clone(), t).unwrap().step(&mut m);
        let su = apply_s(&s.dynamics, t, &u).unwrap();
        let phi_u: Vec<f64> = (0..grid.n()).map(|i| t * s.dynamics.phi(grid.center(i)) * u.masses()[i]).collect();
        let gain = apply_p(&s.reset, &s.dynamics, &GridDensity::new(grid.clone(), phi_u).unwrap()).unwrap();
        let rhs: Vec<f64> = su.masses().iter().zip(gain.masses()).map(|(a, b)| a + b).collect();
        l1(&m, &rhs)
    };
    let (d1, d2) = (defect(1e-3), defect(5e-4));
    assert!(d1 < 1e-5, "defect {d1}");
    assert!(d1 / d2 > 3.0, "ratio {}", d1 / d2);
}

#[test]
fn jump_columns_are_stochastic_inside_truncation() {
    let s = builtin("friedman-const", &[]);
    let grid = s.grid.build().unwrap();
    let p = build_jump(&s.reset, &s.dynamics, grid.clone());
    for j in (0..grid.n()).step_by(97) {
        let total = p.column_mass()[j] + p.column_leakage(j).total();
        assert!((total - 1.0).abs() < 1e-9, "column {j}: {total}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operators_are_positive_and_contract(seed in 0u64..1000, which in 0usize..4, t in 0.0f64..3.0) {
        let id = ["power-phi", "tyson-hannsgen", "friedman-hill", "multiplicative-beta"][which];
        let s = builtin(id, &[]);
        let grid = s.grid.with_n(256).build().unwrap();
        let u = random_density(grid.clone(), seed);
        let su = apply_s(&s.dynamics, t, &u).unwrap();
        prop_assert!(su.masses().iter().all(|&m| m >= 0.0));
        prop_assert!(su.total_mass() <= 1.0 + 1e-12);
        for lambda in [0.5, 1.0, 2.0] {
            let r = resolvent_apply(&s.dynamics, lambda, &u).unwrap();
            prop_assert!(r.masses().iter().all(|&m| m >= 0.0));
            prop_assert!(lambda * r.total_mass() <= 1.0 + 1e-12);
        }
        let k = build_k(&s, grid.clone()).unwrap().apply(&u).unwrap();
        prop_assert!(k.masses().iter().all(|&m| m >= 0.0));
        let p = apply_phi_r0(&s.dynamics, &u).unwrap();
        prop_assert!(p.masses().iter().all(|&m| m >= 0.0));
        prop_assert!(p.total_mass() <= 1.0 + 1e-12);
    }
}
