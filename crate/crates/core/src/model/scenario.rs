use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    BurstLaw, DeterministicReset, Dynamics, FlowKind, FlowModel, FractionLaw, HazardKind, HazardModel, ModelError,
    Orientation, ResetKernel, StateDomain,
};
use crate::grid::{GridKind, GridSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown scenario id `{0}`")]
    UnknownId(String),
}

impl From<ModelError> for ScenarioError {
    fn from(e: ModelError) -> Self {
        ScenarioError::Validation(e.to_string())
    }
}

/// Starting distribution for simulations and density evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    /// Uniform in `x` on the truncation.
    Uniform,
    /// Equal mass per grid cell (log-uniform on log grids).
    EqualCells,
    /// All mass at one level.
    Point { x: f64 },
}

/// Fully validated PDMP description.
#[derive(Clone)]
pub struct ScenarioSpec {
    pub id: String,
    pub dynamics: Dynamics,
    pub reset: ResetKernel,
    pub initial: InitialCondition,
    pub grid: GridSpec,
    pub seed: u64,
    /// Named parameters the scenario was built from.
    pub params: BTreeMap<String, f64>,
}

impl fmt::Debug for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Builtin scenario ids.
pub fn builtin_ids() -> &'static [&'static str] {
    &[
        "lasota-mackey",
        "mackey-ss86",
        "power-phi",
        "loglinear",
        "tyson-hannsgen",
        "multiplicative-beta",
        "friedman-const",
        "friedman-hill",
    ]
}

fn domain(d0: f64, d1: f64, o: Orientation) -> StateDomain {
    StateDomain::new(d0, d1, o).expect("builtin domain")
}

impl ScenarioSpec {
    /// Assemble and validate a scenario.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: &str,
        domain: StateDomain,
        flow: FlowKind,
        hazard: HazardKind,
        reset: ResetKernel,
        grid: GridSpec,
        initial: InitialCondition,
        seed: u64,
        params: BTreeMap<String, f64>,
    ) -> Result<Self, ScenarioError> {
        if !(grid.x_min > domain.d0 && grid.x_max < domain.d1) {
            return Err(ScenarioError::Validation(format!(
                "truncation [{}, {}] must lie strictly inside ({}, {})",
                grid.x_min, grid.x_max, domain.d0, domain.d1
            )));
        }
        if grid.n < 16 {
            return Err(ScenarioError::Validation(format!("grid needs at least 16 cells, got {}", grid.n)));
        }
        let g = grid.build().map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let flow = FlowModel::new(flow, domain, None)?;
        let probes: Vec<f64> = g.centers().into_iter().step_by((g.n() / 64).max(1)).collect();
        let sign = domain.orientation.sign();
        for &x in &probes {
            let v = flow.g(x);
            if !(sign * v > 0.0) {
                return Err(ScenarioError::Validation(format!("velocity g({x}) = {v} has the wrong sign for {:?}", domain.orientation)));
            }
        }
        let (g0, g1) = flow.endpoint_potentials();
        match domain.orientation {
            Orientation::Growth if g1 != f64::INFINITY => {
                return Err(ScenarioError::Validation("growth flow must take infinite time to reach d1".into()))
            }
            Orientation::Decay if g0 != f64::INFINITY => {
                return Err(ScenarioError::Validation("decay flow must take infinite time to reach d0".into()))
            }
            _ => {}
        }
        let hazard = HazardModel::new(hazard, &flow, None)?;
        for &x in &probes {
            let p = hazard.phi(x);
            if !(p >= 0.0) || !p.is_finite() {
                return Err(ScenarioError::Validation(format!("hazard phi({x}) = {p} must be finite and nonnegative")));
            }
        }
        reset.validate(domain.orientation, &probes)?;
        if let InitialCondition::Point { x } = initial {
            if !(x >= grid.x_min && x <= grid.x_max) {
                return Err(ScenarioError::Validation(format!("initial point {x} outside the truncation")));
            }
        }
        Ok(Self { id: id.to_string(), dynamics: Dynamics::new(flow, hazard), reset, initial, grid, seed, params })
    }

    /// Builtin scenario with default parameters.
    pub fn builtin(id: &str) -> Result<Self, ScenarioError> {
        Self::builtin_with(id, &BTreeMap::new())
    }

    /// Builtin scenario with some parameters overridden by name.
    pub fn builtin_with(id: &str, overrides: &BTreeMap<String, f64>) -> Result<Self, ScenarioError> {
        let defaults: &[(&str, f64)] = match id {
            "lasota-mackey" => &[("a", 1.0), ("c", 1.0), ("p", 1.0), ("alpha", 1.0), ("sigma", 0.5)],
            "mackey-ss86" => &[("s", 2.0), ("b", 1.0)],
            "power-phi" => &[("alpha", 1.0), ("b", 2.0), ("k", 1.0)],
            "loglinear" => &[("b", 2.0), ("k", 1.0)],
            "tyson-hannsgen" => &[("b", 2.0), ("sigma", 0.5), ("k", 1.0)],
            "multiplicative-beta" => &[("alpha", 0.0), ("beta", 2.0), ("b", 1.0), ("k", 1.0)],
            "friedman-const" => &[("k1", 2.0), ("gamma", 1.0), ("mean", 1.0)],
            "friedman-hill" => &[("k1", 2.0), ("gamma", 1.0), ("mean", 1.0), ("alpha", 2.0), ("eps", 0.1)],
            _ => return Err(ScenarioError::UnknownId(id.to_string())),
        };
        let mut p: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (k, v) in overrides {
            if !p.contains_key(k) {
                return Err(ScenarioError::Validation(format!("scenario {id} has no parameter `{k}`")));
            }
            p.insert(k.clone(), *v);
        }
        let v = |k: &str| p[k];
        let inf = f64::INFINITY;
        let growth = Orientation::Growth;
        let seed = 42;
        match id {
            "lasota-mackey" => {
                let (a, c) = (v("a"), v("c"));
                Self::new(
                    id,
                    domain(0.0, inf, growth),
                    affine_flow(a, c),
                    HazardKind::Power { p: v("p"), alpha: v("alpha") },
                    ResetKernel::Deterministic(DeterministicReset::Scale { c: v("sigma") }),
                    GridSpec::new(GridKind::Uniform, 1024, 1e-9, 20.0),
                    InitialCondition::Uniform,
                    seed,
                    p,
                )
            }
            "mackey-ss86" => Self::new(
                id,
                domain(0.0, 2.0, growth),
                FlowKind::Logistic { b: v("b") },
                HazardKind::Step { s: v("s") },
                ResetKernel::Deterministic(DeterministicReset::Scale { c: 0.5 }),
                GridSpec::new(GridKind::Uniform, 1536, 0.5, 2.0 - 1e-9),
                InitialCondition::Uniform,
                seed,
                p,
            ),
            "power-phi" => {
                let (alpha, b, k) = (v("alpha"), v("b"), v("k"));
                // Truncate where Q reaches 30; the tail beyond holds about e^-30.
                let x_max = (30.0 * (alpha + 1.0) / b).powf(1.0 / (alpha + 1.0)).max(2.0);
                Self::new(
                    id,
                    domain(0.0, inf, growth),
                    FlowKind::Constant { k },
                    HazardKind::Power { p: b * k, alpha },
                    ResetKernel::Deterministic(DeterministicReset::Scale { c: 0.5 }),
                    GridSpec::new(GridKind::Uniform, 2048, 1e-9, x_max),
                    InitialCondition::Uniform,
                    seed,
                    p,
                )
            }
            "loglinear" => {
                let (b, k) = (v("b"), v("k"));
                Self::new(
                    id,
                    domain(0.0, inf, growth),
                    FlowKind::Constant { k },
                    HazardKind::Power { p: b * k, alpha: -1.0 },
                    ResetKernel::Deterministic(DeterministicReset::Scale { c: 0.5 }),
                    GridSpec::new(GridKind::Uniform, 2048, 1e-4, 24.0),
                    InitialCondition::Point { x: 1.0 },
                    seed,
                    p,
                )
            }
            "tyson-hannsgen" => {
                let (b, s, k) = (v("b"), v("sigma"), v("k"));
                if !(s > 0.0 && s < 1.0) {
                    return Err(ScenarioError::Validation(format!("sigma must lie in (0, 1), got {s}")));
                }
                // Post-jump levels are at least sigma, so the truncation starts
                // just inside the domain; an integer number of reset periods
                // keeps phase-uniform starts exact.
                let x_min = s * (1.0 + 1e-12);
                let x_max = x_min * (1.0 / s).powi(24);
                Self::new(
                    id,
                    domain(s, inf, growth),
                    FlowKind::Linear { k },
                    HazardKind::StepFlat { p: b * k },
                    ResetKernel::Deterministic(DeterministicReset::Scale { c: s }),
                    GridSpec::new(GridKind::Log, 4096, x_min, x_max),
                    InitialCondition::EqualCells,
                    seed,
                    p,
                )
            }
            "multiplicative-beta" => {
                let (alpha, beta, b, k) = (v("alpha"), v("beta"), v("b"), v("k"));
                let x_max = (80.0 * (alpha + 1.0) / b).powf(1.0 / (alpha + 1.0)).max(4.0);
                Self::new(
                    id,
                    domain(0.0, inf, growth),
                    FlowKind::Constant { k },
                    HazardKind::Power { p: b * k, alpha },
                    ResetKernel::Multiplicative(FractionLaw::BetaPower { beta }),
                    GridSpec::new(GridKind::Uniform, 2048, 1e-9, x_max),
                    InitialCondition::Uniform,
                    seed,
                    p,
                )
            }
            "friedman-const" | "friedman-hill" => {
                let (k1, gamma, mean) = (v("k1"), v("gamma"), v("mean"));
                let hazard = if id == "friedman-const" {
                    HazardKind::Constant { p: k1 }
                } else {
                    HazardKind::Hill { k1, alpha: v("alpha"), eps: v("eps") }
                };
                Self::new(
                    id,
                    domain(0.0, inf, Orientation::Decay),
                    FlowKind::LinearDecay { gamma },
                    hazard,
                    ResetKernel::AdditiveBurst(BurstLaw::Exponential { mean }),
                    GridSpec::new(GridKind::Log, 2048, 1e-6, 40.0 * mean),
                    InitialCondition::EqualCells,
                    seed,
                    p,
                )
            }
            _ => unreachable!(),
        }
    }

    /// Same scenario on a different grid.
    pub fn with_grid(&self, grid: GridSpec) -> Result<Self, ScenarioError> {
        let d = self.dynamics.domain();
        if !(grid.x_min > d.d0 && grid.x_max < d.d1) || grid.n < 16 {
            return Err(ScenarioError::Validation("grid must lie strictly inside the domain with at least 16 cells".into()));
        }
        Ok(Self { grid, ..self.clone() })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Canonical one-line description; identical descriptions mean identical
    /// scenarios.
    pub fn describe(&self) -> String {
        format!(
            "id={};dynamics={};reset={};grid={:?};initial={:?};seed={};params={:?}",
            self.id,
            self.dynamics.label(),
            self.reset.label(),
            self.grid,
            self.initial,
            self.seed,
            self.params
        )
    }

    /// Parse a TOML scenario file.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        file.into_spec()
    }

    /// Midpoint of the truncation.
    pub fn truncation_midpoint(&self) -> f64 {
        0.5 * (self.grid.x_min + self.grid.x_max)
    }
}

fn affine_flow(a: f64, c: f64) -> FlowKind {
    FlowModel::custom(&format!("affine(a={a},c={c})"), move |x| a + c * x)
}

/// On-disk scenario layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub domain: DomainSection,
    pub flow: KindSection,
    pub hazard: KindSection,
    pub reset: KindSection,
    pub grid: GridSpec,
    #[serde(default)]
    pub initial: Option<InitialCondition>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub d0: f64,
    pub d1: f64,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindSection {
    pub kind: String,
    #[serde(default)]
    pub params: toml::Table,
}

impl KindSection {
    fn num(&self, section: &str, key: &str) -> Result<f64, ScenarioError> {
        match self.params.get(key) {
            Some(toml::Value::Float(f)) => Ok(*f),
            Some(toml::Value::Integer(i)) => Ok(*i as f64),
            Some(_) => Err(ScenarioError::Parse(format!("[{section}] params.{key} must be a number"))),
            None => Err(ScenarioError::Parse(format!("[{section}] kind `{}` needs params.{key}", self.kind))),
        }
    }

    fn num_list(&self, section: &str, key: &str) -> Result<Vec<f64>, ScenarioError> {
        let bad = || ScenarioError::Parse(format!("[{section}] params.{key} must be an array of numbers"));
        match self.params.get(key) {
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Float(f) => Ok(*f),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    _ => Err(bad()),
                })
                .collect(),
            Some(_) => Err(bad()),
            None => Err(ScenarioError::Parse(format!("[{section}] kind `{}` needs params.{key}", self.kind))),
        }
    }

    fn record(&self, prefix: &str, out: &mut BTreeMap<String, f64>) {
        for (k, v) in &self.params {
            let x = match v {
                toml::Value::Float(f) => *f,
                toml::Value::Integer(i) => *i as f64,
                _ => continue,
            };
            out.insert(format!("{prefix}.{k}"), x);
        }
    }
}

impl ScenarioFile {
    pub fn into_spec(self) -> Result<ScenarioSpec, ScenarioError> {
        let d = &self.domain;
        let dom = StateDomain::new(d.d0, d.d1, d.orientation).map_err(ScenarioError::Validation)?;
        let flow = match self.flow.kind.as_str() {
            "constant" => FlowKind::Constant { k: self.flow.num("flow", "k")? },
            "linear" => FlowKind::Linear { k: self.flow.num("flow", "k")? },
            "logistic" => FlowKind::Logistic { b: self.flow.num("flow", "b")? },
            "linear-decay" => FlowKind::LinearDecay { gamma: self.flow.num("flow", "gamma")? },
            "affine" => affine_flow(self.flow.num("flow", "a")?, self.flow.num("flow", "c")?),
            other => return Err(ScenarioError::Parse(format!("[flow] unknown kind `{other}`"))),
        };
        let h = &self.hazard;
        let hazard = match h.kind.as_str() {
            "zero" => HazardKind::Zero,
            "constant" => HazardKind::Constant { p: h.num("hazard", "p")? },
            "power" => HazardKind::Power { p: h.num("hazard", "p")?, alpha: h.num("hazard", "alpha")? },
            "step" => HazardKind::Step { s: h.num("hazard", "s")? },
            "step-flat" => HazardKind::StepFlat { p: h.num("hazard", "p")? },
            "hill" => HazardKind::Hill { k1: h.num("hazard", "k1")?, alpha: h.num("hazard", "alpha")?, eps: h.num("hazard", "eps")? },
            other => return Err(ScenarioError::Parse(format!("[hazard] unknown kind `{other}`"))),
        };
        let r = &self.reset;
        let reset = match r.kind.as_str() {
            "scale" => ResetKernel::Deterministic(DeterministicReset::Scale { c: r.num("reset", "c")? }),
            "beta-power" => ResetKernel::Multiplicative(FractionLaw::BetaPower { beta: r.num("reset", "beta")? }),
            "fraction-histogram" => ResetKernel::Multiplicative(FractionLaw::Histogram { weights: r.num_list("reset", "weights")? }),
            "exponential-burst" => ResetKernel::AdditiveBurst(BurstLaw::Exponential { mean: r.num("reset", "mean")? }),
            other => return Err(ScenarioError::Parse(format!("[reset] unknown kind `{other}`"))),
        };
        let mut params = BTreeMap::new();
        self.flow.record("flow", &mut params);
        self.hazard.record("hazard", &mut params);
        self.reset.record("reset", &mut params);
        let initial = self.initial.clone().unwrap_or(InitialCondition::Uniform);
        ScenarioSpec::new(
            self.id.as_deref().unwrap_or("custom"),
            dom,
            flow,
            hazard,
            reset,
            self.grid,
            initial,
            self.seed.unwrap_or(42),
            params,
        )
    }
}
