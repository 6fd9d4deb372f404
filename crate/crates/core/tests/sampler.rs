use std::collections::BTreeMap;

use pdmp_core::grid::Grid;
use pdmp_core::model::ScenarioSpec;
use pdmp_core::numeric::{ks_pvalue, ks_statistic};
use pdmp_core::reference::{mackey_ss_density, reference_ustar};
use pdmp_core::sampler::{
    clock_increments, default_bins, event_chain_histogram, moment_ratio_estimate, next_event, occupation_histogram,
    path_rng, simulate_path, simulate_paths, HistogramDensity, NextEvent, SamplerError, Termination, WeightKind,
    DEFAULT_EVENT_CAP,
};
use proptest::prelude::*;
use rand_distr::{Distribution, Exp1};
use statrs::distribution::{ContinuousCDF, Gamma};

fn zero_hazard() -> ScenarioSpec {
    ScenarioSpec::from_toml_str(
        r#"
        [domain]
        d0 = 0.0
        d1 = inf
        orientation = "growth"
        [flow]
        kind = "linear"
        params = { k = 1.0 }
        [hazard]
        kind = "zero"
        [reset]
        kind = "scale"
        params = { c = 0.5 }
        [grid]
        kind = "log"
        n = 64
        x_min = 0.01
        x_max = 100.0
        "#,
    )
    .unwrap()
}

fn builtin(id: &str, overrides: &[(&str, f64)]) -> ScenarioSpec {
    let o: BTreeMap<String, f64> = overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    ScenarioSpec::builtin_with(id, &o).unwrap()
}

#[test]
fn zero_hazard_never_jumps() {
    let s = zero_hazard();
    let mut rng = path_rng(1, 0);
    for x in [0.1, 1.0, 10.0] {
        assert!(matches!(next_event(&s.dynamics, &s.reset, x, &mut rng), NextEvent::NoJump { .. }));
    }
    let p = simulate_path(&s, 1.0, 1.0, 10, &mut rng);
    assert!(p.events.is_empty());
    assert_eq!(p.termination, Termination::NoFurtherJump);
    assert_eq!(p.final_time, 1.0);
    assert!((p.final_state - std::f64::consts::E).abs() < 1e-12);
    assert!(matches!(event_chain_histogram(&s, 100, 10, &default_bins(&s, 8)), Err(SamplerError::NoEvents { .. })));
}

#[test]
fn jump_levels_invert_the_clock() {
    let b = 1.7;
    let s = builtin("multiplicative-beta", &[("alpha", 0.0), ("b", b)]);
    let mut rng = path_rng(9, 3);
    for x in [0.2, 1.0, 3.0] {
        let mut twin = rng.clone();
        let e: f64 = Exp1.sample(&mut twin);
        match next_event(&s.dynamics, &s.reset, x, &mut rng) {
            NextEvent::Jump { a_pre, wait, .. } => {
                assert!((a_pre - (x + e / b)).abs() < 1e-12);
                assert!((wait - e / b).abs() < 1e-12);
            }
            NextEvent::NoJump { .. } => panic!("constant hazard always jumps"),
        }
    }

    let th = builtin("tyson-hannsgen", &[]);
    let mut twin = rng.clone();
    let e: f64 = Exp1.sample(&mut twin);
    match next_event(&th.dynamics, &th.reset, 0.5, &mut rng) {
        NextEvent::Jump { a_pre, a_post, .. } => {
            assert!((a_pre - (e / 2.0).exp()).abs() < 1e-10 * a_pre);
            assert!((a_post - 0.5 * a_pre).abs() < 1e-12 * a_pre);
        }
        NextEvent::NoJump { .. } => panic!("tyson-hannsgen always jumps"),
    }
}

#[test]
fn clock_increments_are_standard_exponential() {
    for id in ["tyson-hannsgen", "friedman-hill", "mackey-ss86"] {
        let s = builtin(id, &[]);
        let x0 = s.truncation_midpoint();
        let p = simulate_path(&s, x0, f64::INFINITY, 20_000, &mut path_rng(s.seed, 0));
        let mut inc = clock_increments(&s, x0, &p.events);
        let n = inc.len();
        let d = ks_statistic(&mut inc, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() });
        assert!(ks_pvalue(d, n) >= 0.01, "{id}: KS p-value {}", ks_pvalue(d, n));
    }
}

#[test]
fn streams_are_independent_of_worker_count() {
    let s = builtin("friedman-hill", &[]);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_paths(&s, 24, None, 30.0, DEFAULT_EVENT_CAP))
    };
    assert_eq!(run(1), run(8));
    let again = simulate_paths(&s, 24, None, 30.0, DEFAULT_EVENT_CAP);
    assert_eq!(run(1), again);
}

#[test]
fn deterministic_resets_move_down() {
    for id in ["power-phi", "tyson-hannsgen", "mackey-ss86", "lasota-mackey"] {
        let s = builtin(id, &[]);
        let p = simulate_path(&s, s.truncation_midpoint(), 200.0, DEFAULT_EVENT_CAP, &mut path_rng(5, 0));
        assert!(!p.events.is_empty());
        assert!(p.events.iter().all(|e| e.a_post < e.a_pre), "{id}");
        assert!(p.events.windows(2).all(|w| w[1].t >= w[0].t));
    }
}

#[test]
fn loglinear_regimes() {
    let stable = builtin("loglinear", &[("b", 1.0)]);
    let paths = simulate_paths(&stable, 200, Some(1.0), 10.0, DEFAULT_EVENT_CAP);
    let reached = paths.iter().filter(|p| p.termination == Termination::HorizonReached).count();
    assert!(reached >= 190, "{reached} of 200 reached the horizon");

    // Explosion is certain for b = 2; the long time horizon absorbs its heavy tail.
    let explosive = builtin("loglinear", &[("b", 2.0)]);
    let paths = simulate_paths(&explosive, 200, Some(1.0), 1e4, DEFAULT_EVENT_CAP);
    let exploded = paths.iter().filter(|p| p.termination == Termination::ExplosionDetected).count();
    assert!(exploded >= 195, "{exploded} of 200 exploded");
}

#[test]
fn moment_ratio_edge_cases() {
    let s = builtin("loglinear", &[("b", 2.0)]);
    assert!(matches!(moment_ratio_estimate(&s, 2.0, 1.0, 5, 10), Err(SamplerError::InvalidExponent { .. })));
    let r = moment_ratio_estimate(&s, 1e-6, 1.0, 10, 2000).unwrap();
    assert!((r - 1.0).abs() < 1e-4, "ratio {r}");
    let r = moment_ratio_estimate(&s, 0.5, 1.0, 20, 10_000).unwrap();
    let exact = 2f64.powf(-0.5) * 2.0 / 1.5;
    assert!((r / exact - 1.0).abs() < 0.05, "ratio {r} vs {exact}");
}

#[test]
fn embedded_chain_matches_bounded_support_density() {
    let s = builtin("mackey-ss86", &[]);
    let edges: Vec<f64> = (0..=50).map(|i| 0.5 + 0.5 * i as f64 / 50.0).collect();
    let h = event_chain_histogram(&s, 100_000, 1000, &edges).unwrap();
    let exact: Vec<f64> = edges.windows(2).map(|w| 2.0 * ((w[1] - 0.5).powi(2) - (w[0] - 0.5).powi(2)) * 2.0).collect();
    let l1 = h.l1_to_masses(&exact, 0.0);
    assert!(l1 < 0.05, "L1 {l1}");
    assert!((mackey_ss_density(2.0, 1.0, 0.75) - 2.0).abs() < 1e-12);
}

#[test]
fn occupation_matches_gamma_law() {
    let s = builtin("friedman-const", &[]);
    let edges = default_bins(&s, 40);
    let h = occupation_histogram(&s, 200.0, 20.0, 100, &edges).unwrap();
    let law = Gamma::new(2.0, 1.0).unwrap();
    let exact: Vec<f64> = edges.windows(2).map(|w| law.cdf(w[1]) - law.cdf(w[0])).collect();
    let outside = 1.0 - exact.iter().sum::<f64>();
    let l1 = h.l1_to_masses(&exact, outside);
    assert!(l1 < 0.05, "L1 {l1}");
}

#[test]
fn occupation_matches_division_series() {
    let s = builtin("power-phi", &[("alpha", 0.0), ("b", 1.0)]);
    let edges = default_bins(&s, 40);
    let h = occupation_histogram(&s, 2000.0, 50.0, 16, &edges).unwrap();
    let u = reference_ustar(&s).unwrap().expect("series reference");
    let (m, out) = u.cell_masses(&Grid::from_edges(edges).unwrap()).unwrap();
    let l1 = h.l1_to_masses(&m, out);
    assert!(l1 < 0.05, "L1 {l1}");
}

#[test]
fn single_segment_occupation_is_travel_time() {
    let s = zero_hazard();
    let mut h = HistogramDensity::empty(vec![1.0, 2.0, 3.0, 4.0], WeightKind::TimeWeighted);
    h.add_segment(&s.dynamics, 1.0, 4f64.ln());
    let want = [2f64.ln(), 1.5f64.ln(), (4.0f64 / 3.0).ln()];
    for (m, w) in h.masses.iter().zip(want) {
        assert!((m - w).abs() < 1e-12);
    }
    assert!(h.outside.abs() < 1e-12);
}

proptest! {
    #[test]
    fn histogram_merge_is_order_independent(xs in prop::collection::vec(0.0f64..12.0, 1..60), split in 0usize..60) {
        let edges: Vec<f64> = (0..=10).map(f64::from).collect();
        let split = split.min(xs.len());
        let fill = |part: &[f64]| {
            let mut h = HistogramDensity::empty(edges.clone(), WeightKind::PerEvent);
            for &x in part {
                h.add_point(x, 1.0);
            }
            h
        };
        let (a, b) = (fill(&xs[..split]), fill(&xs[split..]));
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(ab, fill(&xs));
    }
}
