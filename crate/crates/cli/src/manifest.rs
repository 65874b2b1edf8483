//! Report directories and run manifests.
//!
//! Every file a command writes through [`ReportDir::write`] is listed in
//! the manifest with its SHA-256 digest. Wall-clock timings go to
//! `timing.toml`, which is never digested, so two runs of one manifest can
//! be compared file by file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TIMING_FILE: &str = "timing.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Train,
    Spectrum,
    Slq,
    Sensitivity,
    Rank,
    Surgery,
    Bulkwalk,
    Linearize,
    Stability,
    Baselines,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Spectrum => "spectrum",
            Command::Slq => "slq",
            Command::Sensitivity => "sensitivity",
            Command::Rank => "rank",
            Command::Surgery => "surgery",
            Command::Bulkwalk => "bulkwalk",
            Command::Linearize => "linearize",
            Command::Stability => "stability",
            Command::Baselines => "baselines",
        }
    }

    /// Command behind an `experiment <name>` invocation.
    pub fn experiment(name: &str) -> CliResult<Self> {
        Ok(match name {
            "bulkwalk" => Command::Bulkwalk,
            "linearize" => Command::Linearize,
            "stability" => Command::Stability,
            "baselines" => Command::Baselines,
            "slq-density" => Command::Slq,
            other => {
                return Err(CliError::Config(format!(
                    "unknown experiment {other:?} (bulkwalk, linearize, stability, baselines, slq-density)"
                )))
            }
        })
    }

    /// Files every successful run of the command writes.
    pub fn declared_outputs(self, options: &Options) -> &'static [&'static str] {
        match self {
            Command::Train => &["checkpoint.paramvec", "train_log.tsv", "accuracy.toml"],
            Command::Spectrum => &["spectrum.toml", "eigenvalues.tsv"],
            Command::Slq => &["density.tsv", "slq.toml"],
            Command::Sensitivity => &["sensitivity.toml", "sensitivity.tsv", "basis.toml"],
            Command::Rank => &["rank.toml", "singular_values.tsv"],
            Command::Surgery if options.deflated => &["checkpoint.paramvec", "phases.toml", "report.toml"],
            Command::Surgery => &["checkpoint.paramvec", "trajectory.tsv", "iterations.toml", "report.toml", "deciles.tsv"],
            Command::Bulkwalk => &["walk.tsv", "walk.toml"],
            Command::Linearize => &["sweep.tsv", "fit.toml", "sensitivity.tsv"],
            Command::Stability => &["eigenvalues.tsv", "angles.tsv", "stability.toml"],
            Command::Baselines => &["comparison.tsv", "comparison.toml"],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub deflated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Complete,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub command: Command,
    pub status: Status,
    #[serde(default)]
    pub options: Options,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<InputRef>,
    /// Purposes of every held-out access during the run.
    #[serde(default)]
    pub heldout_accesses: Vec<String>,
    /// Output file name to SHA-256 digest.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| CliError::io(path, e))?))
}

/// Writes `bytes` to `path` through a temporary file and a rename, so a
/// killed process never leaves a truncated file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub struct ReportDir {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
    timing: toml::Table,
}

impl ReportDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: BTreeMap::new(),
            timing: toml::Table::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes a tracked output file.
    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
        let bytes = bytes.as_ref();
        write_atomic(&self.path(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_toml<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = toml::to_string(value).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        self.write(name, text)
    }

    pub fn record_seconds(&mut self, key: &str, seconds: f64) {
        self.timing.insert(key.to_string(), toml::Value::Float(seconds));
    }

    pub fn record_timing(&mut self, key: &str, value: toml::Value) {
        self.timing.insert(key.to_string(), value);
    }

    pub fn outputs(&self) -> &BTreeMap<String, String> {
        &self.outputs
    }

    /// Writes `timing.toml` and the manifest.
    pub fn finish(self, mut manifest: Manifest) -> CliResult<Manifest> {
        let timing = toml::to_string(&self.timing).map_err(|e| CliError::Config(e.to_string()))?;
        write_atomic(&self.path(TIMING_FILE), timing.as_bytes())?;
        manifest.outputs = self.outputs;
        write_atomic(&self.root.join(MANIFEST_FILE), manifest.to_toml()?.as_bytes())?;
        Ok(manifest)
    }
}
