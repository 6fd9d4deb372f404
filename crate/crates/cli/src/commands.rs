use std::collections::BTreeMap;
use std::path::Path;

use pdmp_core::model::{builtin_ids, ScenarioSpec};
use pdmp_core::operators::{build_k, diagnose, invariant_density, lift_to_continuous, InvariantOptions};
use pdmp_core::pde::{evolve, initial_density, max_stable_dt, PdeError};
use pdmp_core::reference::{reference_ustar, reference_vstar};
use pdmp_core::sampler::{
    default_bins, default_burn_in, event_chain_histogram, occupation_histogram, simulate_paths, HistogramDensity,
    SamplerError, Termination,
};
use pdmp_core::verify::{criteria, run_verify_all, STABLE_BUILTINS};
use serde::Serialize;

use crate::error::{runtime, CliError};
use crate::output::{check_manifest, file_name, manifest_name, scenario_hash, Csv, Run};

const LEVEL: &str = "level";
const DENSITY: &str = "probability per unit level";

fn sampler_err(e: SamplerError) -> CliError {
    match e {
        SamplerError::Invalid(_) | SamplerError::InvalidExponent { .. } => CliError::Usage(e.to_string()),
        _ => runtime(e),
    }
}

fn pde_err(e: PdeError) -> CliError {
    match e {
        PdeError::CflViolation { .. } | PdeError::InvalidArgument(_) => CliError::Usage(e.to_string()),
        _ => runtime(e),
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::HorizonReached => "horizon reached",
        Termination::ExplosionDetected => "explosion detected",
        Termination::NoFurtherJump => "no further jump",
        Termination::EventCapReached => "event cap reached",
    }
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name} must be positive and finite, got {x}")))
    }
}

fn nonzero(name: &str, n: usize) -> Result<(), CliError> {
    if n > 0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name} must be at least 1")))
    }
}

pub fn simulate(
    spec: &ScenarioSpec,
    paths: usize,
    horizon: f64,
    x0: Option<f64>,
    event_cap: usize,
    out: &Path,
) -> Result<(), CliError> {
    nonzero("paths", paths)?;
    nonzero("event-cap", event_cap)?;
    positive("horizon", horizon)?;
    let mut run = Run::for_file(out)?;
    let results = simulate_paths(spec, paths, x0, horizon, event_cap);
    let mut csv = Csv::new("path,index,t,a_pre,a_post", &format!("path=id, index=count, t=time, a_pre={LEVEL}, a_post={LEVEL}"));
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut events = 0usize;
    for (i, p) in results.iter().enumerate() {
        for e in &p.events {
            csv.row(format_args!("{i},{},{},{},{}", e.index, e.t, e.a_pre, e.a_post));
        }
        events += p.events.len();
        *counts.entry(termination_name(p.termination)).or_default() += 1;
    }
    run.write(&file_name(out)?, &csv.into_bytes())?;
    run.finish(&manifest_name(out), spec)?;
    println!("{paths} paths, {events} events -> {}", out.display());
    for (k, n) in counts {
        println!("  {k}: {n}");
    }
    Ok(())
}

pub enum HistogramKind {
    Event { events: usize, burn_in: Option<usize> },
    Occupation { paths: usize, horizon: f64, burn_in: Option<f64> },
}

pub fn histogram(spec: &ScenarioSpec, kind: HistogramKind, bins: usize, out: &Path) -> Result<(), CliError> {
    nonzero("bins", bins)?;
    let edges = default_bins(spec, bins);
    let h: HistogramDensity = match kind {
        HistogramKind::Event { events, burn_in } => {
            nonzero("events", events)?;
            event_chain_histogram(spec, events, burn_in.unwrap_or_else(|| default_burn_in(events)), &edges)
                .map_err(sampler_err)?
        }
        HistogramKind::Occupation { paths, horizon, burn_in } => {
            nonzero("paths", paths)?;
            positive("horizon", horizon)?;
            let burn_in = burn_in.unwrap_or(0.1 * horizon);
            if !(0.0..horizon).contains(&burn_in) {
                return Err(CliError::Usage(format!("--burn-in {burn_in} must lie in [0, horizon)")));
            }
            occupation_histogram(spec, horizon, burn_in, paths, &edges).map_err(sampler_err)?
        }
    };
    let mut csv = Csv::new("bin_left,bin_right,density", &format!("bin_left={LEVEL}, bin_right={LEVEL}, density={DENSITY}"));
    for (w, d) in h.edges.windows(2).zip(h.densities()) {
        csv.row(format_args!("{},{},{}", w[0], w[1], d));
    }
    let mut run = Run::for_file(out)?;
    run.write(&file_name(out)?, &csv.into_bytes())?;
    run.finish(&manifest_name(out), spec)?;
    println!("{bins} bins ({:?}), weight outside the bins {:.3e} -> {}", h.weight_kind, h.outside, out.display());
    Ok(())
}

fn density_csv(centers: &[f64], values: &[f64], note: &str) -> Csv {
    let mut csv = Csv::new("x_center,density", &format!("x_center={LEVEL}, density={DENSITY}{note}"));
    for (x, d) in centers.iter().zip(values) {
        csv.row(format_args!("{x},{d}"));
    }
    csv
}

pub fn evolve_cmd(spec: &ScenarioSpec, horizon: f64, dt: Option<f64>, snapshots: usize, out: &Path) -> Result<(), CliError> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(CliError::Usage(format!("--T must be finite and nonnegative, got {horizon}")));
    }
    if let Some(dt) = dt {
        positive("dt", dt)?;
    }
    nonzero("snapshots", snapshots)?;
    let grid = spec.grid.build().map_err(runtime)?;
    let u0 = initial_density(spec, grid.clone()).map_err(pde_err)?;
    let ev = evolve(spec, &u0, horizon, dt, snapshots).map_err(pde_err)?;
    let mut run = Run::new(out)?;
    let centers = grid.centers();
    for (k, (t, d)) in ev.snapshots.iter().enumerate() {
        let csv = density_csv(&centers, &d.density_values(), &format!("; snapshot at t={t}"));
        run.write(&format!("snapshot_{k:03}.csv"), &csv.into_bytes())?;
    }
    let mut csv = Csv::new("t,interior,leak_low,leak_high", "t=time, interior=probability, leak_low=probability, leak_high=probability");
    for r in &ev.mass_series {
        csv.row(format_args!("{},{},{},{}", r.t, r.interior, r.leak_low, r.leak_high));
    }
    run.write("mass.csv", &csv.into_bytes())?;
    run.write("config.json", (serde_json::to_string_pretty(&ev.config)? + "\n").as_bytes())?;
    run.finish("manifest.json", spec)?;
    let last = ev.mass_series.last().expect("initial record");
    println!(
        "{} steps of dt {:.4e} on {} cells; at t={}: interior {:.6}, leaked low {:.3e}, high {:.3e} -> {}",
        ev.config.steps,
        ev.config.dt,
        ev.config.cells,
        last.t,
        last.interior,
        last.leak_low,
        last.leak_high,
        out.display()
    );
    Ok(())
}

pub fn invariant(spec: &ScenarioSpec, out: &Path, lift: Option<&Path>) -> Result<(), CliError> {
    let grid = spec.grid.build().map_err(runtime)?;
    let k = build_k(spec, grid.clone()).map_err(runtime)?;
    let res = invariant_density(&k, &InvariantOptions::default()).map_err(runtime)?;
    let centers = grid.centers();
    let mut run = Run::for_file(out)?;
    run.write(&file_name(out)?, &density_csv(&centers, &res.density.density_values(), "").into_bytes())?;
    if let Some(lift) = lift {
        if lift.parent() != out.parent() {
            return Err(CliError::Usage("--lift must be in the same directory as --out".into()));
        }
        let u = lift_to_continuous(&spec.dynamics, &res.density).map_err(runtime)?;
        run.write(&file_name(lift)?, &density_csv(&centers, &u.density_values(), "").into_bytes())?;
    }
    run.finish(&manifest_name(out), spec)?;
    println!(
        "power iteration: {} steps, residual {:.3e}, mass factor {:.9} -> {}",
        res.iterations,
        res.residual,
        res.mass_factor,
        out.display()
    );
    Ok(())
}

pub fn diagnose_cmd(spec: &ScenarioSpec, out: &Path) -> Result<(), CliError> {
    let grid = spec.grid.build().map_err(runtime)?;
    let report = diagnose(spec, grid).map_err(runtime)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    let mut run = Run::for_file(out)?;
    run.write(&file_name(out)?, json.as_bytes())?;
    run.finish(&manifest_name(out), spec)?;
    println!(
        "K stochastic: {}; invariant density: {:?}; partial integrality: {:?} -> {}",
        report.is_k_stochastic.stochastic,
        report.blas,
        report.partial_integrality,
        out.display()
    );
    Ok(())
}

pub fn verify(target: Option<&str>, filter: Option<&str>, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(t) = target {
        if !builtin_ids().contains(&t) {
            return Err(CliError::Usage(format!("unknown scenario `{t}`; builtins: {}", builtin_ids().join(", "))));
        }
    }
    let filter = filter.or(target);
    if let Some(f) = filter {
        if !criteria().iter().any(|c| c.matches(f)) {
            return Err(CliError::Usage(format!("no acceptance criterion matches `{f}`")));
        }
    }
    let summary = run_verify_all(filter);
    for o in &summary.outcomes {
        let tag = if o.passed() { "PASS" } else { "FAIL" };
        eprintln!("{tag} [{}] {} ({:.1}s, budget {}s)", o.id, o.title, o.seconds, o.budget_seconds);
        for c in &o.checks {
            let mark = if c.passed { "ok " } else { "BAD" };
            eprintln!("    {mark} {}: {:.4e} {} {:.4e}", c.name, c.value, c.relation, c.threshold);
        }
        if let Some(e) = &o.error {
            eprintln!("    error: {e}");
        }
    }
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, json)?;
        }
        None => print!("{json}"),
    }
    if summary.passed {
        Ok(())
    } else {
        let failed: Vec<String> = summary.outcomes.iter().filter(|o| !o.passed()).map(|o| o.id.to_string()).collect();
        Err(CliError::Failed(format!("criteria {} did not pass", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct ScenarioReport<'a> {
    id: &'a str,
    hash: String,
    description: String,
    params: &'a BTreeMap<String, f64>,
    seed: u64,
    grid: pdmp_core::grid::GridSpec,
    stable_builtin: bool,
    reference_jump_density: bool,
    reference_stationary_density: bool,
    max_stable_dt: f64,
}

pub fn report_scenario(spec: &ScenarioSpec, out: Option<&Path>) -> Result<(), CliError> {
    let grid = spec.grid.build().map_err(runtime)?;
    let r = ScenarioReport {
        id: &spec.id,
        hash: scenario_hash(spec),
        description: spec.describe(),
        params: &spec.params,
        seed: spec.seed,
        grid: spec.grid,
        stable_builtin: STABLE_BUILTINS.contains(&spec.id.as_str()),
        reference_jump_density: reference_vstar(spec).map_err(runtime)?.is_some(),
        reference_stationary_density: reference_ustar(spec).map_err(runtime)?.is_some(),
        max_stable_dt: max_stable_dt(spec, &grid),
    };
    let json = serde_json::to_string_pretty(&r)? + "\n";
    match out {
        Some(p) => std::fs::write(p, json)?,
        None => print!("{json}"),
    }
    Ok(())
}

pub fn report_builtins() -> Result<(), CliError> {
    for id in builtin_ids() {
        let s = ScenarioSpec::builtin(id)?;
        let params: Vec<String> = s.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let stable = if STABLE_BUILTINS.contains(id) { "stable" } else { "no invariant density" };
        println!("{id:<20} {stable:<22} {}", params.join(" "));
    }
    Ok(())
}

pub fn report_manifest(path: &Path) -> Result<(), CliError> {
    let (m, bad) = check_manifest(path)?;
    println!("{} {} on {} (seed {}), {} outputs", m.tool, m.tool_version, m.scenario_id, m.seed, m.outputs.len());
    if bad.is_empty() {
        println!("all digests match");
        Ok(())
    } else {
        Err(CliError::Failed(format!("digest mismatch for {}", bad.join(", "))))
    }
}
