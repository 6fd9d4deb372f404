//! CSV/JSON emission and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pdmp_core::model::ScenarioSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fingerprint of a fully resolved scenario.
pub fn scenario_hash(spec: &ScenarioSpec) -> String {
    sha256_hex(spec.describe().as_bytes())
}

/// CSV text: a `#` line with units, the column header, then rows.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str, units: &str) -> Self {
        Self { text: format!("# units: {units}\n{header}\n") }
    }

    pub fn row(&mut self, fields: std::fmt::Arguments<'_>) {
        self.text.write_fmt(fields).expect("writing to a String");
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command_line: Vec<String>,
    pub scenario_id: String,
    pub scenario_hash: String,
    pub scenario: String,
    pub seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// Output file name (relative to the manifest) to sha256 digest.
    pub outputs: BTreeMap<String, String>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Collects output files of one command and writes its manifest.
pub struct Run {
    started: u128,
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl Run {
    /// Outputs and manifest live in `dir`.
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self { started: now_ms(), dir: dir.to_path_buf(), outputs: BTreeMap::new() })
    }

    /// Run rooted at the parent directory of `file`.
    pub fn for_file(file: &Path) -> Result<Self, CliError> {
        Self::new(file.parent().unwrap_or(Path::new("")))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Writes `manifest_name` next to the outputs.
    pub fn finish(self, manifest_name: &str, spec: &ScenarioSpec) -> Result<PathBuf, CliError> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command_line: std::env::args().collect(),
            scenario_id: spec.id.clone(),
            scenario_hash: scenario_hash(spec),
            scenario: spec.describe(),
            seed: spec.seed,
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
            outputs: self.outputs,
        };
        let path = self.dir.join(manifest_name);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}

/// Name of the manifest for a single output file: `hist.csv` gives
/// `hist.manifest.json`.
pub fn manifest_name(file: &Path) -> String {
    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    format!("{stem}.manifest.json")
}

pub fn file_name(file: &Path) -> Result<String, CliError> {
    file.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Usage(format!("`{}` is not a file path", file.display())))
}

/// Recomputes the digests listed in a manifest; returns the mismatching
/// file names.
pub fn check_manifest(path: &Path) -> Result<(RunManifest, Vec<String>), CliError> {
    let text = std::fs::read_to_string(path)?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut bad = Vec::new();
    for (name, digest) in &manifest.outputs {
        match std::fs::read(dir.join(name)) {
            Ok(bytes) if sha256_hex(&bytes) == *digest => {}
            _ => bad.push(name.clone()),
        }
    }
    Ok((manifest, bad))
}
