//! Scenario ingestion: builtin ids or TOML files, with command-line overrides.

use std::collections::BTreeMap;
use std::path::Path;

use pdmp_core::model::{builtin_ids, ScenarioFile, ScenarioSpec};

use crate::error::CliError;

/// Splits `key=value` overrides.
pub fn parse_sets(sets: &[String]) -> Result<Vec<(String, f64)>, CliError> {
    sets.iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("override `{s}` is not key=value")))?;
            let x: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("override `{s}`: `{v}` is not a number")))?;
            Ok((k.trim().to_string(), x))
        })
        .collect()
}

/// Resolves `scenario` as a builtin id, then as a file path.
///
/// Builtins take bare parameter names (`b=1.5`); files take
/// `section.name` keys (`hazard.p=2`, `grid.n=512`, `seed=7`).
pub fn load_scenario(scenario: &str, sets: &[String], seed: Option<u64>) -> Result<ScenarioSpec, CliError> {
    let overrides = parse_sets(sets)?;
    let spec = if builtin_ids().contains(&scenario) {
        let o: BTreeMap<String, f64> = overrides.into_iter().collect();
        ScenarioSpec::builtin_with(scenario, &o)?
    } else {
        let path = Path::new(scenario);
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "unknown scenario `{scenario}`: not a builtin id ({}) and not a file",
                builtin_ids().join(", ")
            )));
        }
        let text = std::fs::read_to_string(path)?;
        let mut file: ScenarioFile =
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("parse error in {scenario}: {e}")))?;
        for (k, v) in overrides {
            apply_file_override(&mut file, &k, v)?;
        }
        if file.id.is_none() {
            file.id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        file.into_spec()?
    };
    Ok(match seed {
        Some(s) => spec.with_seed(s),
        None => spec,
    })
}

fn apply_file_override(file: &mut ScenarioFile, key: &str, v: f64) -> Result<(), CliError> {
    let bad = || CliError::Usage(format!("cannot override `{key}` in a scenario file"));
    let (section, name) = match key.split_once('.') {
        Some(p) => p,
        None if key == "seed" => {
            file.seed = Some(integer(key, v)? as u64);
            return Ok(());
        }
        None => return Err(bad()),
    };
    let params = match section {
        "flow" => &mut file.flow.params,
        "hazard" => &mut file.hazard.params,
        "reset" => &mut file.reset.params,
        "grid" => {
            match name {
                "n" => file.grid.n = integer(key, v)? as usize,
                "x_min" => file.grid.x_min = v,
                "x_max" => file.grid.x_max = v,
                _ => return Err(bad()),
            }
            return Ok(());
        }
        _ => return Err(bad()),
    };
    params.insert(name.to_string(), toml::Value::Float(v));
    Ok(())
}

fn integer(key: &str, v: f64) -> Result<f64, CliError> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("`{key}` must be a nonnegative integer, got {v}")))
    }
}

/// Replaces the cell count of the scenario grid.
pub fn with_cells(spec: ScenarioSpec, n: Option<usize>) -> Result<ScenarioSpec, CliError> {
    match n {
        Some(n) => Ok(spec.with_grid(spec.grid.with_n(n))?),
        None => Ok(spec),
    }
}
