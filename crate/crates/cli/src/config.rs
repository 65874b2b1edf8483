//! Run configuration: one TOML tree, unknown keys rejected.
//!
//! Grammar: a top-level `seed` (required), a `[fixture]` table with a
//! required `preset`, and optional tables `[model]`, `[train]`,
//! `[operator]`, `[spectrum]`, `[slq]`, `[sensitivity]`, `[surgery]`,
//! `[deflation]`, `[bulkwalk]`, `[linearize]`, `[stability]` and
//! `[baselines]`. Command-line `--set path.to.key=value` overrides are
//! applied to the tree before it is validated; `value` is parsed as a TOML
//! literal and falls back to a plain string.

use serde::{Deserialize, Serialize};
use spikesurgery::experiments::{BulkWalkConfig, SweepConfig, StabilityStudyConfig};
use spikesurgery::models::{Activation, Loss, MlpSpec, Optimizer, TrainConfig};
use spikesurgery::operators::SpikedOperatorSpec;
use spikesurgery::surgery::{DeflationConfig, SurgeryConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the fixture data and model training.
    pub seed: u64,
    pub fixture: FixtureSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub operator: OperatorSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub slq: SlqSection,
    #[serde(default)]
    pub sensitivity: SensitivitySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surgery: Option<SurgeryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deflation: Option<DeflationConfig>,
    #[serde(default)]
    pub bulkwalk: BulkWalkSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearize: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityStudyConfig>,
    #[serde(default)]
    pub baselines: BaselinesSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSection {
    pub preset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            activation: Activation::Tanh,
        }
    }
}

impl ModelSection {
    pub fn spec(&self, input: usize, classes: usize) -> CliResult<MlpSpec> {
        let mut widths = vec![input];
        widths.extend(&self.hidden);
        widths.push(classes);
        Ok(MlpSpec::new(widths, self.activation, Loss::CrossEntropy)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            optimizer: t.optimizer,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed,
            optimizer: self.optimizer.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorSource {
    /// Mini-batch Hessian of the fixture model.
    Model,
    /// Planted synthetic spectrum from `[operator.spiked]`.
    Spiked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorSection {
    pub source: OperatorSource,
    /// Training samples per class in the HVP batch.
    pub hvp_per_class: usize,
    pub batch_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spiked: Option<SpikedOperatorSpec>,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self {
            source: OperatorSource::Model,
            hvp_per_class: 64,
            batch_seed: 0,
            spiked: None,
        }
    }
}

impl OperatorSection {
    pub fn spiked_spec(&self) -> SpikedOperatorSpec {
        self.spiked.clone().unwrap_or_else(|| SpikedOperatorSpec::resnet_like(500, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub order: usize,
    pub top_k: usize,
    pub seed: u64,
    pub gap_factor: f64,
    /// Overrides the bulk median used for labelling. Defaults to the
    /// planted bulk for synthetic operators and to the median of the lower
    /// half of the Ritz window for models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bulk_median: Option<f64>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            order: 10,
            top_k: 10,
            seed: 0,
            gap_factor: spikesurgery::lanczos::DEFAULT_GAP_FACTOR,
            bulk_median: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlqSection {
    pub order: usize,
    pub probes: usize,
    pub sigma2: f64,
    pub grid_points: usize,
    pub seed: u64,
    /// Probe counts for the convergence table; empty skips it.
    pub convergence_probes: Vec<usize>,
}

impl Default for SlqSection {
    fn default() -> Self {
        Self {
            order: 100,
            probes: 10,
            sigma2: 1e-5,
            grid_points: 1000,
            seed: 0,
            convergence_probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivitySection {
    pub epsilon: f64,
    pub spikes: usize,
    pub order: usize,
    pub seed: u64,
    /// Draw a stratified split from the training data instead of using
    /// the sensitivity split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_cap: Option<usize>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            spikes: 10,
            order: 10,
            seed: 0,
            per_class_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BulkWalkSection {
    pub steps: usize,
    /// Step size; ignored when `relative_displacement` is set.
    pub epsilon: f64,
    /// Target `‖θ_f − θ_i‖/‖θ_i‖` for a straight walk.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_displacement: Option<f64>,
    pub spikes: usize,
    pub wall_tol: f64,
    pub lanczos_order: usize,
    pub hvp_per_class: usize,
    pub history_cap: usize,
    pub track_lambda: bool,
    pub seed: u64,
}

impl Default for BulkWalkSection {
    fn default() -> Self {
        let b = BulkWalkConfig::new(20, 0.1, 3);
        Self {
            steps: b.steps,
            epsilon: b.epsilon,
            relative_displacement: None,
            spikes: b.spikes,
            wall_tol: b.wall_tol,
            lanczos_order: b.lanczos_order,
            hvp_per_class: b.hvp_per_class,
            history_cap: b.history_cap,
            track_lambda: b.track_lambda,
            seed: b.seed,
        }
    }
}

impl BulkWalkSection {
    pub fn to_config(&self, theta_norm: f64) -> BulkWalkConfig {
        let epsilon = match self.relative_displacement {
            Some(r) => r * theta_norm / self.steps.max(1) as f64,
            None => self.epsilon,
        };
        BulkWalkConfig {
            steps: self.steps,
            epsilon,
            wall_tol: self.wall_tol,
            spikes: self.spikes,
            lanczos_order: self.lanczos_order,
            hvp_per_class: self.hvp_per_class,
            history_cap: self.history_cap,
            track_lambda: self.track_lambda,
            seed: self.seed,
        }
    }
}

/// Baseline comparison settings; the Surgery rows use `[surgery]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselinesSection {
    pub focal_gamma: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub tau_values: Vec<f64>,
    pub logit_tau: f64,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        let b = spikesurgery::experiments::BaselineConfig::fixture(0);
        Self {
            focal_gamma: b.focal_gamma,
            finetune_epochs: b.finetune.epochs,
            finetune_lr: b.finetune.lr,
            tau_values: b.tau_values,
            logit_tau: b.logit_tau,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> CliResult<Self> {
        let mut tree: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        Self::from_table(tree)
    }

    pub fn from_table(tree: toml::Table) -> CliResult<Self> {
        toml::Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    pub fn to_table(&self) -> CliResult<toml::Table> {
        toml::Table::try_from(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn require_surgery(&self) -> CliResult<&SurgeryConfig> {
        self.surgery.as_ref().ok_or_else(|| CliError::missing("surgery"))
    }

    pub fn require_linearize(&self) -> CliResult<&SweepConfig> {
        self.linearize.as_ref().ok_or_else(|| CliError::missing("linearize"))
    }

    pub fn require_stability(&self) -> CliResult<&StabilityStudyConfig> {
        self.stability.as_ref().ok_or_else(|| CliError::missing("stability"))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `path.to.key=value` override, creating missing tables.
pub fn apply_override(tree: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad override path {path:?}")));
    }
    let mut table = tree;
    for k in &keys[..keys.len() - 1] {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {path:?}: {k:?} is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
