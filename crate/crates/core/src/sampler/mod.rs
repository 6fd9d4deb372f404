//! Event-driven Monte Carlo: exponential-clock jumps along the flow, path
//! statistics, explosion detection and histogram estimators.

mod histogram;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::GridKind;
use crate::model::{Dynamics, InitialCondition, ResetKernel, ScenarioSpec};

pub use histogram::{HistogramDensity, WeightKind};

/// Default cap on events per path.
pub const DEFAULT_EVENT_CAP: usize = 1_000_000;
/// Window of inter-event times checked by the time-collapse rule.
pub const COLLAPSE_WINDOW: usize = 100;
/// Threshold on the window sum of inter-event times.
pub const COLLAPSE_TIME: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("path exploded after {events} events at time {time}")]
    ExplosiveScenario { events: usize, time: f64 },
    #[error("chain stopped after {collected} events: no further jump")]
    NoEvents { collected: usize },
    #[error("moment exponent {gamma} must lie in (0, {b})")]
    InvalidExponent { gamma: f64, b: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// One jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: u64,
    pub t: f64,
    pub a_pre: f64,
    pub a_post: f64,
    /// The Exp(1) variate that fixed the jump level.
    pub clock_draw: f64,
}

/// Outcome of one clock draw from a given level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextEvent {
    Jump { a_pre: f64, a_post: f64, wait: f64, clock_draw: f64 },
    /// The clock never rings: the level flows to the downstream endpoint.
    NoJump { clock_draw: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    HorizonReached,
    ExplosionDetected,
    NoFurtherJump,
    EventCapReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub events: Vec<EventRecord>,
    pub final_time: f64,
    pub final_state: f64,
    pub termination: Termination,
}

/// Random stream of path `index` under base `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

/// Draw the next jump from level `x`.
pub fn next_event<R: rand::Rng + ?Sized>(dynamics: &Dynamics, reset: &ResetKernel, x: f64, rng: &mut R) -> NextEvent {
    let e: f64 = Exp1.sample(rng);
    let s = dynamics.q(x) + e;
    let a = match dynamics.q_inv(s) {
        Ok(a) => a,
        Err(_) => return NextEvent::NoJump { clock_draw: e },
    };
    let down = dynamics.domain().downstream();
    if a == down || !dynamics.domain().contains(a) {
        return NextEvent::NoJump { clock_draw: e };
    }
    // Guard against round-off placing the jump marginally upstream of x.
    let a = match dynamics.orientation() {
        crate::model::Orientation::Growth => a.max(x),
        crate::model::Orientation::Decay => a.min(x),
    };
    let wait = dynamics.travel_time(x, a).max(0.0);
    let post = reset.sample(a, rng);
    NextEvent::Jump { a_pre: a, a_post: post, wait, clock_draw: e }
}

/// A deterministic piece of a path: starts at `x` at time `t` and flows for
/// `duration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t: f64,
    pub x: f64,
    pub duration: f64,
}

/// Run one path, reporting every flow segment and every event to `observer`.
/// Segments are reported before the event that ends them.
pub fn run_path<R, F>(
    scenario: &ScenarioSpec,
    x0: f64,
    horizon: f64,
    event_cap: usize,
    rng: &mut R,
    mut observer: F,
) -> (f64, f64, usize, Termination)
where
    R: rand::Rng + ?Sized,
    F: FnMut(Segment, Option<&EventRecord>),
{
    let dyn_ = &scenario.dynamics;
    let mut t = 0.0;
    let mut x = x0;
    let mut count = 0usize;
    let mut window = [0.0f64; COLLAPSE_WINDOW];
    let mut window_sum = 0.0;
    loop {
        if count >= event_cap {
            let term = if horizon.is_finite() { Termination::ExplosionDetected } else { Termination::EventCapReached };
            return (t, x, count, term);
        }
        match next_event(dyn_, &scenario.reset, x, rng) {
            NextEvent::NoJump { .. } => {
                if horizon.is_finite() {
                    let d = horizon - t;
                    observer(Segment { t, x, duration: d }, None);
                    return (horizon, dyn_.flow_map(d, x), count, Termination::NoFurtherJump);
                }
                return (t, x, count, Termination::NoFurtherJump);
            }
            NextEvent::Jump { a_pre, a_post, wait, clock_draw } => {
                if t + wait > horizon {
                    let d = horizon - t;
                    observer(Segment { t, x, duration: d }, None);
                    return (horizon, dyn_.flow_map(d, x), count, Termination::HorizonReached);
                }
                let ev = EventRecord { index: count as u64, t: t + wait, a_pre, a_post, clock_draw };
                observer(Segment { t, x, duration: wait }, Some(&ev));
                let slot = count % COLLAPSE_WINDOW;
                window_sum += wait - window[slot];
                window[slot] = wait;
                t += wait;
                x = a_post;
                count += 1;
                // Levels only reach the boundary through underflow after
                // accumulating jumps.
                if !dyn_.domain().contains(x) {
                    return (t, x, count, Termination::ExplosionDetected);
                }
                if slot == COLLAPSE_WINDOW - 1 {
                    // Resync: the running sum keeps rounding residue of long waits.
                    window_sum = window.iter().sum();
                }
                if count >= COLLAPSE_WINDOW && window_sum.max(0.0) < COLLAPSE_TIME {
                    let exact: f64 = window.iter().sum();
                    if exact < COLLAPSE_TIME {
                        return (t, x, count, Termination::ExplosionDetected);
                    }
                    window_sum = exact;
                }
            }
        }
    }
}

/// Simulate one path from `x0` up to `horizon`, keeping all events.
pub fn simulate_path<R: rand::Rng + ?Sized>(
    scenario: &ScenarioSpec,
    x0: f64,
    horizon: f64,
    event_cap: usize,
    rng: &mut R,
) -> PathResult {
    let mut events = Vec::new();
    let (final_time, final_state, _, termination) = run_path(scenario, x0, horizon, event_cap, rng, |_, ev| {
        if let Some(e) = ev {
            events.push(*e);
        }
    });
    PathResult { events, final_time, final_state, termination }
}

/// Draw a starting level from the scenario's initial condition.
pub fn sample_initial<R: rand::Rng + ?Sized>(scenario: &ScenarioSpec, rng: &mut R) -> f64 {
    let g = scenario.grid;
    match scenario.initial {
        InitialCondition::Point { x } => x,
        InitialCondition::Uniform => Uniform::new(g.x_min, g.x_max).expect("valid range").sample(rng),
        InitialCondition::EqualCells => match g.kind {
            GridKind::Uniform => Uniform::new(g.x_min, g.x_max).expect("valid range").sample(rng),
            GridKind::Log => {
                let u: f64 = rng.random();
                g.x_min * (u * (g.x_max / g.x_min).ln()).exp()
            }
        },
    }
}

/// Simulate `n_paths` independent paths in parallel; path `i` uses stream
/// `seed ^ i` and starts from `x0` or a draw from the initial condition.
pub fn simulate_paths(
    scenario: &ScenarioSpec,
    n_paths: usize,
    x0: Option<f64>,
    horizon: f64,
    event_cap: usize,
) -> Vec<PathResult> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(scenario.seed, i as u64);
            let start = x0.unwrap_or_else(|| sample_initial(scenario, &mut rng));
            simulate_path(scenario, start, horizon, event_cap, &mut rng)
        })
        .collect()
}

/// Bin edges over the truncation: geometric on log grids, uniform otherwise.
pub fn default_bins(scenario: &ScenarioSpec, bins: usize) -> Vec<f64> {
    let g = scenario.grid;
    match g.kind {
        GridKind::Log => {
            let r = (g.x_max / g.x_min).ln();
            (0..=bins).map(|i| g.x_min * (r * i as f64 / bins as f64).exp()).collect()
        }
        GridKind::Uniform => (0..=bins).map(|i| g.x_min + (g.x_max - g.x_min) * i as f64 / bins as f64).collect(),
    }
}

/// Default burn-in for a chain of `n_events`.
pub fn default_burn_in(n_events: usize) -> usize {
    (n_events / 10).max(1000).min(n_events.saturating_sub(1))
}

/// Histogram of post-jump levels of the embedded chain. The chain starts at
/// the truncation midpoint; the first `burn_in` of `n_events` are discarded.
pub fn event_chain_histogram(
    scenario: &ScenarioSpec,
    n_events: usize,
    burn_in: usize,
    edges: &[f64],
) -> Result<HistogramDensity, SamplerError> {
    if burn_in >= n_events {
        return Err(SamplerError::Invalid(format!("burn-in {burn_in} must be below n_events {n_events}")));
    }
    let mut rng = path_rng(scenario.seed, 0);
    let mut hist = HistogramDensity::empty(edges.to_vec(), WeightKind::PerEvent);
    let mut seen = 0usize;
    let (time, _, count, term) =
        run_path(scenario, scenario.truncation_midpoint(), f64::INFINITY, n_events, &mut rng, |_, ev| {
            if let Some(e) = ev {
                if seen >= burn_in {
                    hist.add_point(e.a_post, 1.0);
                }
                seen += 1;
            }
        });
    match term {
        Termination::EventCapReached => Ok(hist.normalized()),
        Termination::ExplosionDetected => Err(SamplerError::ExplosiveScenario { events: count, time }),
        _ => Err(SamplerError::NoEvents { collected: count }),
    }
}

/// Time-weighted histogram over `n_paths` paths of length `horizon`; the
/// first `burn_in` time units of each path are discarded.
pub fn occupation_histogram(
    scenario: &ScenarioSpec,
    horizon: f64,
    burn_in: f64,
    n_paths: usize,
    edges: &[f64],
) -> Result<HistogramDensity, SamplerError> {
    let parts: Vec<Result<HistogramDensity, SamplerError>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(scenario.seed, i as u64);
            let start = sample_initial(scenario, &mut rng);
            let mut hist = HistogramDensity::empty(edges.to_vec(), WeightKind::TimeWeighted);
            let (time, _, count, term) =
                run_path(scenario, start, horizon, DEFAULT_EVENT_CAP, &mut rng, |seg, _| {
                    let end = seg.t + seg.duration;
                    if end <= burn_in {
                        return;
                    }
                    let (x, d) = if seg.t < burn_in {
                        let skip = burn_in - seg.t;
                        (scenario.dynamics.flow_map(skip, seg.x), seg.duration - skip)
                    } else {
                        (seg.x, seg.duration)
                    };
                    hist.add_segment(&scenario.dynamics, x, d);
                });
            if term == Termination::ExplosionDetected {
                return Err(SamplerError::ExplosiveScenario { events: count, time });
            }
            Ok(hist)
        })
        .collect();
    let mut total = HistogramDensity::empty(edges.to_vec(), WeightKind::TimeWeighted);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total.normalized())
}

/// Average per-step ratio of empirical moments `E[a_n^g] / E[a_(n-1)^g]` of
/// the embedded chain started at `a0`, over `paths` chains of `n` steps.
/// Only defined for scenarios whose `Q = b ln x` (parameter `b`).
pub fn moment_ratio_estimate(
    scenario: &ScenarioSpec,
    gamma: f64,
    a0: f64,
    n: usize,
    paths: usize,
) -> Result<f64, SamplerError> {
    let b = *scenario
        .params
        .get("b")
        .ok_or_else(|| SamplerError::Invalid("moment ratios need a scenario with parameter b".into()))?;
    if !(gamma > 0.0 && gamma < b) {
        return Err(SamplerError::InvalidExponent { gamma, b });
    }
    let sums: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(scenario.seed, i as u64);
            let mut out = vec![0.0; n + 1];
            let mut x = a0;
            out[0] = x.powf(gamma);
            for slot in out.iter_mut().skip(1) {
                match next_event(&scenario.dynamics, &scenario.reset, x, &mut rng) {
                    NextEvent::Jump { a_post, .. } => x = a_post,
                    NextEvent::NoJump { .. } => break,
                }
                *slot = x.powf(gamma);
            }
            out
        })
        .collect();
    let mut moments = vec![0.0; n + 1];
    for s in &sums {
        for (m, v) in moments.iter_mut().zip(s) {
            *m += v;
        }
    }
    let ratios: Vec<f64> = moments.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// `Q(a_pre_n) - Q(a_post_(n-1))` along a path started at `x0`: these should
/// be i.i.d. Exp(1).
pub fn clock_increments(scenario: &ScenarioSpec, x0: f64, events: &[EventRecord]) -> Vec<f64> {
    let mut prev = x0;
    events
        .iter()
        .map(|e| {
            let d = scenario.dynamics.q(e.a_pre) - scenario.dynamics.q(prev);
            prev = e.a_post;
            d
        })
        .collect()
}
