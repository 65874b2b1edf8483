//! Side-by-side comparison of rebalancing methods on the held-out split.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{
    empirical_priors, fine_tune, logit_adjust, logits, per_class_accuracy, tau_normalize, ClassAccuracy, Dataset, Loss,
    MlpSpec, NoHooks, TrainConfig, REPORT_ACCESS,
};
use crate::surgery::{run_surgery, SurgeryConfig};
use crate::vecspace::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "default_gamma")]
    pub focal_gamma: f64,
    pub finetune: TrainConfig,
    #[serde(default = "default_taus")]
    pub tau_values: Vec<f64>,
    #[serde(default = "default_logit_tau")]
    pub logit_tau: f64,
    pub surgery: SurgeryConfig,
}

fn default_gamma() -> f64 {
    2.0
}
fn default_taus() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
}
fn default_logit_tau() -> f64 {
    1.0
}

impl BaselineConfig {
    /// Fine-tuning at a tenth of the fixture training rate for 15 epochs.
    pub fn fixture(seed: u64) -> Self {
        Self {
            focal_gamma: default_gamma(),
            finetune: TrainConfig {
                epochs: 15,
                lr: 1e-3,
                seed,
                ..TrainConfig::default()
            },
            tau_values: default_taus(),
            logit_tau: default_logit_tau(),
            surgery: super::fixture_surgery_config(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub global: f64,
    pub sigma: f64,
    pub delta_sigma: f64,
    /// Two weakest classes of the baseline and their accuracy under this method.
    pub weakest: Vec<(usize, f64)>,
    pub per_class: Vec<f64>,
    pub post_hoc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// τ-norm row with the smallest σ.
    pub fn best_tau(&self) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .filter(|r| r.method.starts_with("tau-norm"))
            .min_by(|a, b| a.sigma.total_cmp(&b.sigma))
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("# method global sigma delta_sigma weakest post_hoc\n");
        for r in &self.rows {
            let weak: Vec<String> = r.weakest.iter().map(|(c, a)| format!("{c}:{a:.4}")).collect();
            s.push_str(&format!(
                "{:?} {:.6} {:.6} {:+.6} {} {}\n",
                r.method,
                r.global,
                r.sigma,
                r.delta_sigma,
                weak.join(","),
                r.post_hoc
            ));
        }
        s
    }
}

fn weakest_two(acc: &ClassAccuracy) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..acc.classes()).filter(|&j| acc.defined[j]).collect();
    idx.sort_by(|&a, &b| acc.per_class[a].total_cmp(&acc.per_class[b]).then(a.cmp(&b)));
    idx.truncate(2);
    idx
}

/// Every method starts from `theta0`; fine-tuning uses the training
/// split, Surgery uses the sensitivity split, and all rows are evaluated
/// on the held-out split.
pub fn compare_baselines(
    spec: &MlpSpec,
    theta0: &ParamVector,
    data: &Dataset,
    config: &BaselineConfig,
) -> Result<ComparisonTable> {
    let classes = spec.classes();
    let heldout = data.heldout(REPORT_ACCESS);
    let base = per_class_accuracy(spec, theta0, heldout)?;
    let weak = weakest_two(&base);
    let row = |method: String, acc: ClassAccuracy, post_hoc: bool| ComparisonRow {
        method,
        global: acc.global,
        sigma: acc.sigma,
        delta_sigma: acc.sigma - base.sigma,
        weakest: weak.iter().map(|&j| (j, acc.per_class[j])).collect(),
        per_class: acc.per_class,
        post_hoc,
    };
    let mut rows = vec![row("baseline".into(), base.clone(), true)];

    let focal_spec = spec.with_loss(Loss::Focal {
        gamma: config.focal_gamma,
    })?;
    let focal = fine_tune(&focal_spec, theta0, data.train(), &config.finetune, &mut NoHooks)?.theta;
    rows.push(row(format!("focal-ft (gamma={})", config.focal_gamma), per_class_accuracy(spec, &focal, heldout)?, false));

    let counts = data.train().class_counts(classes);
    let n = data.train().len() as f64;
    let class_weights: Vec<f64> = counts.iter().map(|&c| n / (classes as f64 * c.max(1) as f64)).collect();
    let weighted_spec = spec.with_loss(Loss::WeightedCe { class_weights })?;
    let weighted = fine_tune(&weighted_spec, theta0, data.train(), &config.finetune, &mut NoHooks)?.theta;
    rows.push(row("class-weighted-ft".into(), per_class_accuracy(spec, &weighted, heldout)?, false));

    for &tau in &config.tau_values {
        let t = tau_normalize(spec, theta0, tau)?;
        rows.push(row(format!("tau-norm (tau={tau})"), per_class_accuracy(spec, &t, heldout)?, true));
    }

    let priors = empirical_priors(data.train(), classes);
    let z = logits(spec, theta0, heldout)?;
    let preds = logit_adjust(&z, classes, &priors, config.logit_tau)?;
    let adjusted = ClassAccuracy::from_predictions(&preds, heldout.labels(), classes)?;
    rows.push(row(format!("logit-adjust (tau={})", config.logit_tau), adjusted, true));

    let (surgery, _) = run_surgery(spec, theta0, data, &config.surgery)?;
    rows.push(row("surgery".into(), per_class_accuracy(spec, &surgery.theta, heldout)?, true));

    let (after_focal, _) = run_surgery(spec, &focal, data, &config.surgery)?;
    rows.push(row("focal+surgery".into(), per_class_accuracy(spec, &after_focal.theta, heldout)?, true));

    Ok(ComparisonTable { rows })
}
