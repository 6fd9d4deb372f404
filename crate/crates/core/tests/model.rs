use std::f64::consts::{E, LN_2};

use pdmp_core::model::{
    eval_g, eval_q, flow_map, invert_q, FlowKind, FlowModel, HazardKind, HazardModel, Orientation, ScenarioError,
    ScenarioSpec, StateDomain,
};
use pdmp_core::numeric::Quadrature;
use proptest::prelude::*;

fn positive(o: Orientation) -> StateDomain {
    StateDomain::new(0.0, f64::INFINITY, o).unwrap()
}

fn flow(kind: FlowKind, x0: Option<f64>) -> FlowModel {
    FlowModel::new(kind, positive(Orientation::Growth), x0).unwrap()
}

#[test]
fn potential_values() {
    let c = flow(FlowKind::Constant { k: 2.0 }, Some(1e-300));
    assert!((eval_g(&c, 1.0).unwrap() - 0.5).abs() < 1e-12);
    let l = flow(FlowKind::Linear { k: 1.0 }, Some(1.0));
    assert_eq!(eval_g(&l, 1.0).unwrap(), 0.0);
    assert!((eval_g(&l, E).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn potential_matches_quadrature_for_custom_velocity() {
    let f = flow(FlowModel::custom("sqrt", |x: f64| 1.0 + x.sqrt()), Some(1.0));
    let q = Quadrature::default();
    for x in [0.3, 2.0, 7.5] {
        let direct = q.integrate(|z: f64| 1.0 / (1.0 + z.sqrt()), 1.0, x).unwrap().value;
        assert!((eval_g(&f, x).unwrap() - direct).abs() < 1e-10, "x={x}");
    }
}

#[test]
fn cumulative_hazard_values() {
    let lin = flow(FlowKind::Linear { k: 1.0 }, None);
    let step = HazardModel::new(HazardKind::StepFlat { p: 2.0 }, &lin, None).unwrap();
    assert!((eval_q(&step, &lin, 2.0) - 2.0 * LN_2).abs() < 1e-12);
    assert_eq!(eval_q(&step, &lin, 0.5), 0.0);

    let c = flow(FlowKind::Constant { k: 1.0 }, None);
    let pow = HazardModel::new(HazardKind::Power { p: 2.0, alpha: 1.0 }, &c, None).unwrap();
    assert!((eval_q(&pow, &c, 3.0) - 9.0).abs() < 1e-12);
}

#[test]
fn flow_map_values() {
    let l = flow(FlowKind::Linear { k: 1.0 }, None);
    assert!((flow_map(&l, 1.0, 1.0) - E).abs() < 1e-12);
    assert_eq!(flow_map(&l, 0.0, 3.3), 3.3);
    let d = FlowModel::new(FlowKind::LinearDecay { gamma: 2.0 }, positive(Orientation::Decay), None).unwrap();
    assert!((flow_map(&d, 0.5, 4.0) - 4.0 / E).abs() < 1e-12);
}

#[test]
fn flow_map_agrees_with_rk4() {
    // Independent route: integrate dx/dt = g(x) with classical RK4.
    let g = |x: f64| x * (2.0 - x);
    let f = FlowModel::new(FlowKind::Logistic { b: 1.0 }, StateDomain::new(0.0, 2.0, Orientation::Growth).unwrap(), None)
        .unwrap();
    let (mut x, h) = (0.3, 1e-4);
    for _ in 0..10_000 {
        let k1 = g(x);
        let k2 = g(x + 0.5 * h * k1);
        let k3 = g(x + 0.5 * h * k2);
        let k4 = g(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    assert!((flow_map(&f, 1.0, 0.3) - x).abs() < 1e-10);
}

#[test]
fn inverse_cumulative_hazard() {
    let c = flow(FlowKind::Constant { k: 1.0 }, None);
    let pow = HazardModel::new(HazardKind::Power { p: 2.0, alpha: 0.0 }, &c, None).unwrap();
    assert!((invert_q(&pow, &c, 1.0).unwrap() - 0.5).abs() < 1e-12);

    let lin = flow(FlowKind::Linear { k: 1.0 }, None);
    let step = HazardModel::new(HazardKind::StepFlat { p: 2.0 }, &lin, None).unwrap();
    assert!((invert_q(&step, &lin, 4f64.ln()).unwrap() - 2.0).abs() < 1e-10);

    let hill = HazardModel::new(HazardKind::Hill { k1: 2.0, alpha: 2.0, eps: 0.1 }, &c, None).unwrap();
    for x in [0.1, 1.0, 4.0, 20.0] {
        let s = eval_q(&hill, &c, x);
        assert!((invert_q(&hill, &c, s).unwrap() - x).abs() < 1e-10 * x.max(1.0), "x={x}");
    }
}

#[test]
fn anchors_are_observationally_neutral() {
    let kinds = [FlowKind::Linear { k: 1.5 }, FlowModel::custom("1+x", |x: f64| 1.0 + x)];
    for kind in kinds {
        let a = flow(kind.clone(), Some(1.0));
        let b = flow(kind, Some(3.7));
        let ha = HazardModel::new(HazardKind::Power { p: 1.2, alpha: 0.5 }, &a, Some(1.0)).unwrap();
        let hb = HazardModel::new(HazardKind::Power { p: 1.2, alpha: 0.5 }, &b, Some(0.4)).unwrap();
        for (x, y) in [(0.2, 0.9), (1.1, 6.0), (2.5, 2.6)] {
            let dg_a = eval_g(&a, y).unwrap() - eval_g(&a, x).unwrap();
            let dg_b = eval_g(&b, y).unwrap() - eval_g(&b, x).unwrap();
            assert!((dg_a - dg_b).abs() < 1e-10);
            let dq_a = eval_q(&ha, &a, y) - eval_q(&ha, &a, x);
            let dq_b = eval_q(&hb, &b, y) - eval_q(&hb, &b, x);
            assert!((dq_a - dq_b).abs() < 1e-10);
            assert!((flow_map(&a, 0.7, x) - flow_map(&b, 0.7, x)).abs() < 1e-10 * x.max(1.0));
            let next_a = invert_q(&ha, &a, eval_q(&ha, &a, x) + 0.8).unwrap();
            let next_b = invert_q(&hb, &b, eval_q(&hb, &b, x) + 0.8).unwrap();
            assert!((next_a - next_b).abs() < 1e-9 * next_a.max(1.0));
        }
    }
}

#[test]
fn builtin_tyson_hannsgen_definition() {
    let s = ScenarioSpec::builtin("tyson-hannsgen").unwrap();
    let d = s.dynamics.domain();
    assert_eq!((d.d0, d.d1, d.orientation), (0.5, f64::INFINITY, Orientation::Growth));
    assert_eq!(s.dynamics.phi(0.9), 0.0);
    assert_eq!(s.dynamics.phi(1.1), 2.0);
    assert!((s.dynamics.g(3.0) - 3.0).abs() < 1e-15);
}

#[test]
fn scenario_file_errors() {
    assert!(matches!(ScenarioSpec::from_toml_str("[domain\nd0 = "), Err(ScenarioError::Parse(_))));
    let unnormalized = r#"
        [domain]
        d0 = 0.0
        d1 = inf
        orientation = "growth"
        [flow]
        kind = "constant"
        params = { k = 1.0 }
        [hazard]
        kind = "constant"
        params = { p = 1.0 }
        [reset]
        kind = "fraction-histogram"
        params = { weights = [0.3, 0.3, 0.3] }
        [grid]
        kind = "uniform"
        n = 64
        x_min = 0.001
        x_max = 10.0
    "#;
    match ScenarioSpec::from_toml_str(unnormalized) {
        Err(ScenarioError::Validation(msg)) => assert!(msg.contains("psi"), "{msg}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

fn growth_flows() -> Vec<FlowModel> {
    vec![
        flow(FlowKind::Constant { k: 0.7 }, None),
        flow(FlowKind::Linear { k: 1.3 }, None),
        FlowModel::new(FlowKind::Logistic { b: 2.0 }, StateDomain::new(0.0, 2.0, Orientation::Growth).unwrap(), None).unwrap(),
        flow(FlowModel::custom("1+x^2", |x: f64| 1.0 + x * x), None),
    ]
}

fn in_truncation(f: &FlowModel, u: f64) -> f64 {
    let hi = if f.domain.d1.is_finite() { f.domain.d1 * 0.999 } else { 50.0 };
    1e-3 + u * (hi - 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn potential_round_trip(which in 0usize..4, u in 0.0f64..1.0) {
        let f = &growth_flows()[which];
        let x = in_truncation(f, u);
        let back = f.big_g_inv(eval_g(f, x).unwrap());
        prop_assert!((back - x).abs() <= 1e-9 * (1.0 + x.abs()), "x={x} back={back}");
    }
}

proptest! {
    #[test]
    fn semiflow_law(which in 0usize..4, u in 0.0f64..1.0, s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let f = &growth_flows()[which];
        let x = in_truncation(f, u) * 0.2;
        let two = flow_map(f, t, flow_map(f, s, x));
        let one = flow_map(f, t + s, x);
        if one.is_finite() {
            prop_assert!((two - one).abs() <= 1e-9 * one.abs().max(1e-300), "{two} vs {one}");
        }
    }

    #[test]
    fn flow_is_increasing_in_time(which in 0usize..4, u in 0.0f64..1.0, s in 0.0f64..2.0, dt in 1e-3f64..1.0) {
        let f = &growth_flows()[which];
        let x = in_truncation(f, u) * 0.2;
        let (a, b) = (flow_map(f, s, x), flow_map(f, s + dt, x));
        if b.is_finite() && b < f.domain.d1 {
            prop_assert!(b > a);
        }
    }

    #[test]
    fn hazard_is_nondecreasing_along_flow(alpha in -0.5f64..2.0, u in 0.0f64..1.0, s in 0.0f64..2.0, dt in 0.0f64..1.0) {
        let f = flow(FlowKind::Linear { k: 1.0 }, None);
        let h = HazardModel::new(HazardKind::Power { p: 1.0, alpha }, &f, None).unwrap();
        let x = 0.05 + u * 5.0;
        let (a, b) = (flow_map(&f, s, x), flow_map(&f, s + dt, x));
        prop_assert!(eval_q(&h, &f, b) >= eval_q(&h, &f, a) - 1e-12);
    }
}
