//! The iterative Surgery loop and its deflated multi-phase variant.

use serde::{Deserialize, Serialize};

use super::controller::{AmplitudeController, Anchor};
use super::solver::{per_spike_bounds, solve_coefficients, Budget, BudgetMode, Solution};
use super::weights::{class_weights, recommend_p, WeightConfig};
use crate::error::{Error, Result};
use crate::lanczos::{lanczos, ritz, SpikeBasis, DEFAULT_REL_TOL};
use crate::models::{per_class_accuracy, ClassAccuracy, Dataset, MlpSpec, REPORT_ACCESS};
use crate::operators::{stratified_batch, Deflated, HvpOracle, ModelOracle};
use crate::sensitivity::sensitivity_matrix;
use crate::vecspace::{derive_seed, max_abs_inner, orthonormalize, ParamVector, Rng};

const HVP_TAG: u64 = 0x4e55;
const START_TAG: u64 = 0x57a7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeryConfig {
    pub iterations: usize,
    pub spikes: usize,
    #[serde(default = "default_order")]
    pub lanczos_order: usize,
    /// Training samples per class in each iteration's HVP batch.
    #[serde(default = "default_hvp_per_class")]
    pub hvp_per_class: usize,
    #[serde(default = "default_mode")]
    pub budget: BudgetMode,
    pub alpha0: f64,
    pub alpha_min: f64,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default = "default_sigma_guard")]
    pub sigma_guard: f64,
    #[serde(default = "default_drop_guard")]
    pub drop_guard: f64,
    #[serde(default)]
    pub anchor: Anchor,
    #[serde(default)]
    pub seed: u64,
}

fn default_order() -> usize {
    10
}
fn default_hvp_per_class() -> usize {
    64
}
fn default_mode() -> BudgetMode {
    BudgetMode::GlobalL2
}
fn default_sigma_guard() -> f64 {
    0.005
}
fn default_drop_guard() -> f64 {
    0.07
}

impl SurgeryConfig {
    pub fn new(iterations: usize, spikes: usize, alpha0: f64, alpha_min: f64) -> Self {
        Self {
            iterations,
            spikes,
            lanczos_order: default_order(),
            hvp_per_class: default_hvp_per_class(),
            budget: default_mode(),
            alpha0,
            alpha_min,
            weights: WeightConfig::default(),
            sigma_guard: default_sigma_guard(),
            drop_guard: default_drop_guard(),
            anchor: Anchor::Initial,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spikes == 0 || self.spikes > self.lanczos_order {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= spikes ({}) <= lanczos_order ({})",
                self.spikes, self.lanczos_order
            )));
        }
        if !(self.alpha0 > 0.0) || !(self.alpha_min >= 0.0) || self.alpha_min > self.alpha0 {
            return Err(Error::InvalidArgument("need 0 <= alpha_min <= alpha0, alpha0 > 0".into()));
        }
        Ok(())
    }
}

/// One row of the Surgery trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub accepted: bool,
    /// The solver found no feasible nonzero step.
    pub skipped: bool,
    /// Accuracies of the candidate on the sensitivity split.
    pub per_class: Vec<f64>,
    pub sigma: f64,
    pub global: f64,
    pub alpha_max: f64,
    pub alpha: Vec<f64>,
    pub predicted: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub p_exponent: f64,
    pub delta_max: f64,
    pub g: f64,
    pub snr: f64,
    /// Written as 16 hex digits: derived seeds exceed the signed 64-bit
    /// integers TOML can hold.
    #[serde(with = "hex_seed")]
    pub hvp_seed: u64,
}

mod hex_seed {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{seed:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        u64::from_str_radix(&text, 16).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryState {
    pub t: usize,
    pub theta: ParamVector,
    /// Accuracy of `theta` on the sensitivity split.
    pub accuracy: ClassAccuracy,
    pub baseline: ClassAccuracy,
    pub controller: AmplitudeController,
    pub log: Vec<IterationRecord>,
    /// Deflation basis the spikes are taken orthogonal to (empty for plain Surgery).
    #[serde(default)]
    pub deflate: Vec<ParamVector>,
    #[serde(default)]
    pub phase: usize,
}

impl SurgeryState {
    pub fn new(spec: &MlpSpec, theta: &ParamVector, data: &Dataset, config: &SurgeryConfig) -> Result<Self> {
        config.validate()?;
        crate::error::check_dim(spec.param_count(), theta.dim())?;
        let accuracy = per_class_accuracy(spec, theta, data.sensitivity())?;
        Ok(Self {
            t: 0,
            theta: theta.clone(),
            baseline: accuracy.clone(),
            accuracy,
            controller: AmplitudeController::new(config.iterations, config.alpha_min, config.alpha0)
                .with_anchor(config.anchor),
            log: Vec::new(),
            deflate: Vec::new(),
            phase: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub accept: bool,
    pub delta_max: f64,
    pub g: f64,
}

/// Rollback rule: reject when σ rises by more than `sigma_guard` or any
/// class drops by more than `drop_guard`.
pub fn decide(prev: &ClassAccuracy, cand: &ClassAccuracy, sigma_guard: f64, drop_guard: f64) -> Decision {
    let delta_max = (0..prev.classes())
        .filter(|&j| prev.defined[j])
        .map(|j| prev.per_class[j] - cand.per_class[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let reject = cand.sigma > prev.sigma + sigma_guard || delta_max > drop_guard;
    Decision {
        accept: !reject,
        delta_max,
        g: if reject { -delta_max } else { prev.sigma - cand.sigma },
    }
}

fn start_vector(dim: usize, seed: u64, deflate: &[ParamVector]) -> Result<ParamVector> {
    let v = Rng::new(seed).gaussian_vector(dim, 1.0);
    let v = crate::vecspace::gram_schmidt_residual(&v, deflate)?;
    v.normalized()
        .ok_or_else(|| Error::InvalidArgument("start vector vanished after deflation".into()))
}

/// Top `k` positive Ritz pairs of the mini-batch Hessian, optionally
/// deflated by `deflate` (orthonormal). The start vector is projected off
/// `deflate` so every Ritz vector stays orthogonal to it.
pub fn spike_basis(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: crate::models::Samples,
    deflate: &[ParamVector],
    order: usize,
    k: usize,
    seed: u64,
) -> Result<SpikeBasis> {
    let oracle = ModelOracle::new(spec.clone(), theta.clone(), batch)?;
    let q1 = start_vector(theta.dim(), seed, deflate)?;
    let out = if deflate.is_empty() {
        lanczos(&oracle, &q1, order, DEFAULT_REL_TOL)?
    } else {
        let d = Deflated::new(&oracle, deflate)?;
        lanczos(&d, &q1, order, DEFAULT_REL_TOL)?
    };
    let label = format!("{} | deflated={} lanczos m={order} seed={seed}", oracle.provenance(), deflate.len());
    let b = ritz(&out, k.min(out.tridiagonal.dim()), label)?;
    let keep = b.eigenvalues.iter().take_while(|&&l| l > 0.0).count();
    if keep < b.len() {
        log::warn!("spike_basis: dropped {} non-positive Ritz values", b.len() - keep);
    }
    Ok(b.truncated(keep))
}

fn budget_for(mode: BudgetMode, alpha_max: f64, eigenvalues: &[f64]) -> Budget {
    match mode {
        BudgetMode::GlobalL2 => Budget::Ball { radius: alpha_max },
        BudgetMode::PerSpikeBox => Budget::Box {
            bounds: per_spike_bounds(eigenvalues, alpha_max).bounds,
        },
    }
}

/// One Surgery iteration with a basis supplied by the caller.
pub fn surgery_step_with_basis(
    state: &mut SurgeryState,
    spec: &MlpSpec,
    data: &Dataset,
    config: &SurgeryConfig,
    basis: &SpikeBasis,
    hvp_seed: u64,
) -> Result<()> {
    let eval = data.sensitivity();
    let alpha_max = state.controller.current;
    let prev = state.accuracy.clone();
    let p = match config.weights.p_exponent {
        Some(p) => p,
        None => recommend_p(&prev.per_class, config.weights.target).p,
    };
    let weights = class_weights(&prev.per_class, p).weights;
    let sol = if basis.is_empty() {
        None
    } else {
        let s = sensitivity_matrix(spec, &state.theta, basis, alpha_max, eval, "sensitivity")?;
        let budget = budget_for(config.budget, alpha_max, &basis.eigenvalues);
        Some(solve_coefficients(&s.values, &prev.per_class, &weights, &budget, &config.weights)?)
    };
    let skipped = sol.as_ref().is_none_or(|s: &Solution| s.infeasible);
    let (alpha, predicted) = match &sol {
        Some(s) => (s.alpha.clone(), s.predicted.clone()),
        None => (vec![0.0; basis.len()], vec![0.0; prev.classes()]),
    };

    let (cand_theta, cand_acc, decision) = if skipped {
        (None, prev.clone(), Decision { accept: false, delta_max: 0.0, g: 0.0 })
    } else {
        let cand = if alpha.iter().all(|&a| a == 0.0) {
            state.theta.clone()
        } else {
            let mut delta = ParamVector::zeros(state.theta.dim());
            for (a, q) in alpha.iter().zip(&basis.vectors) {
                delta.axpy(*a, q)?;
            }
            state.theta.add(&delta)?
        };
        let acc = per_class_accuracy(spec, &cand, eval)?;
        let d = decide(&prev, &acc, config.sigma_guard, config.drop_guard);
        (Some(cand), acc, d)
    };
    let g = decision.g;
    state.controller.update(g);
    if decision.accept {
        state.theta = cand_theta.expect("accepted steps carry a candidate");
        state.accuracy = cand_acc.clone();
    }
    log::info!(
        "surgery t={} alpha_max={alpha_max:.4e} sigma {:.4} -> {:.4} {}",
        state.t,
        prev.sigma,
        cand_acc.sigma,
        if skipped { "skipped" } else if decision.accept { "accepted" } else { "rolled back" }
    );
    state.log.push(IterationRecord {
        t: state.t,
        accepted: decision.accept,
        skipped,
        per_class: cand_acc.per_class.clone(),
        sigma: cand_acc.sigma,
        global: cand_acc.global,
        alpha_max,
        alpha,
        predicted,
        eigenvalues: basis.eigenvalues.clone(),
        p_exponent: p,
        delta_max: decision.delta_max,
        g,
        snr: state.controller.last_snr,
        hvp_seed,
    });
    state.t += 1;
    Ok(())
}

/// One Surgery iteration: fresh seeded HVP batch, new spike basis,
/// sensitivity, solve, apply, evaluate, accept or roll back.
pub fn surgery_step(state: &mut SurgeryState, spec: &MlpSpec, data: &Dataset, config: &SurgeryConfig) -> Result<()> {
    let tags = [HVP_TAG, state.phase as u64, state.t as u64];
    let hvp_seed = derive_seed(config.seed, &tags);
    let batch = stratified_batch(data.train(), data.classes(), config.hvp_per_class, &mut Rng::new(hvp_seed))?;
    let start = derive_seed(config.seed, &[START_TAG, state.phase as u64, state.t as u64]);
    let basis = spike_basis(
        spec,
        &state.theta,
        batch,
        &state.deflate,
        config.lanczos_order,
        config.spikes,
        start,
    )?;
    surgery_step_with_basis(state, spec, data, config, &basis, hvp_seed)
}

/// Runs iterations until `config.iterations` is reached or `observer`
/// returns `false` after an iteration.
pub fn run_iterations(
    state: &mut SurgeryState,
    spec: &MlpSpec,
    data: &Dataset,
    config: &SurgeryConfig,
    observer: &mut dyn FnMut(&SurgeryState) -> Result<bool>,
) -> Result<()> {
    while state.t < config.iterations {
        surgery_step(state, spec, data, config)?;
        if !observer(state)? {
            break;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryReport {
    pub sensitivity_before: ClassAccuracy,
    pub sensitivity_after: ClassAccuracy,
    pub heldout_before: ClassAccuracy,
    pub heldout_after: ClassAccuracy,
    pub accepted: usize,
    pub rolled_back: usize,
    pub skipped: usize,
}

impl SurgeryReport {
    pub fn relative_sigma_change(&self) -> f64 {
        (self.heldout_after.sigma - self.heldout_before.sigma) / self.heldout_before.sigma
    }

    /// Trajectory table: `t accepted alpha_max sigma global`.
    pub fn trajectory(log: &[IterationRecord]) -> String {
        let mut s = String::from("# t accepted alpha_max sigma global g\n");
        for r in log {
            s.push_str(&format!(
                "{} {} {:.6e} {:.6} {:.6} {:.6e}\n",
                r.t, r.accepted as u8, r.alpha_max, r.sigma, r.global, r.g
            ));
        }
        s
    }
}

/// Before/after evaluation; the only place the held-out split is read.
pub fn final_report(spec: &MlpSpec, theta0: &ParamVector, state: &SurgeryState, data: &Dataset) -> Result<SurgeryReport> {
    let heldout = data.heldout(REPORT_ACCESS);
    Ok(SurgeryReport {
        sensitivity_before: state.baseline.clone(),
        sensitivity_after: state.accuracy.clone(),
        heldout_before: per_class_accuracy(spec, theta0, heldout)?,
        heldout_after: per_class_accuracy(spec, &state.theta, heldout)?,
        accepted: state.log.iter().filter(|r| r.accepted).count(),
        rolled_back: state.log.iter().filter(|r| !r.accepted && !r.skipped).count(),
        skipped: state.log.iter().filter(|r| r.skipped).count(),
    })
}

pub fn run_surgery(
    spec: &MlpSpec,
    theta0: &ParamVector,
    data: &Dataset,
    config: &SurgeryConfig,
) -> Result<(SurgeryState, SurgeryReport)> {
    let mut state = SurgeryState::new(spec, theta0, data, config)?;
    run_iterations(&mut state, spec, data, config, &mut |_| Ok(true))?;
    let report = final_report(spec, theta0, &state, data)?;
    Ok((state, report))
}

/// `α₁·√(λ₁/λ_ℓ)`: amplitude for a later phase whose top eigenvalue is `λ_ℓ`.
pub fn phase_amplitude(alpha1: f64, lambda1: f64, lambda_l: f64) -> f64 {
    alpha1 * (lambda1 / lambda_l).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeflationConfig {
    pub phases: usize,
    pub spikes_per_phase: usize,
    pub iters_per_phase: usize,
    /// Upper limit on stored deflation vectors.
    #[serde(default = "default_max_vectors")]
    pub max_vectors: usize,
}

fn default_max_vectors() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub lambda_max: f64,
    pub alpha_max: f64,
    pub eigenvalues: Vec<f64>,
    /// `max |Q_ℓᵀQ_ℓ'|` over all earlier phases (0 for the first).
    pub cross_correlation: f64,
    pub sigma_before: f64,
    pub sigma_after: f64,
    pub log: Vec<IterationRecord>,
}

/// Sequential deflated Surgery. `base` supplies every per-iteration
/// setting; `base.alpha0` is the first phase's amplitude and
/// `base.spikes` is ignored in favour of `spikes_per_phase`.
pub fn run_deflated_surgery(
    spec: &MlpSpec,
    theta0: &ParamVector,
    data: &Dataset,
    base: &SurgeryConfig,
    deflation: &DeflationConfig,
) -> Result<(ParamVector, Vec<PhaseRecord>)> {
    if deflation.phases == 0 {
        return Err(Error::InvalidArgument("need at least one phase".into()));
    }
    let mut theta = theta0.clone();
    let mut accumulated: Vec<ParamVector> = Vec::new();
    let mut phase_bases: Vec<Vec<ParamVector>> = Vec::new();
    let mut records = Vec::new();
    let mut lambda1 = None;
    for phase in 0..deflation.phases {
        let requested = accumulated.len() + deflation.spikes_per_phase;
        if requested > deflation.max_vectors {
            return Err(Error::MemoryGuard {
                requested,
                limit: deflation.max_vectors,
            });
        }
        let seed = derive_seed(base.seed, &[0xdef1, phase as u64]);
        let batch = stratified_batch(data.train(), data.classes(), base.hvp_per_class, &mut Rng::new(seed))?;
        let basis = spike_basis(
            spec,
            &theta,
            batch,
            &accumulated,
            base.lanczos_order,
            deflation.spikes_per_phase,
            derive_seed(seed, &[START_TAG]),
        )?;
        if basis.is_empty() {
            log::warn!("deflated surgery: phase {phase} found no positive spikes, stopping");
            break;
        }
        let lambda_max = basis.eigenvalues[0];
        let l1 = *lambda1.get_or_insert(lambda_max);
        let alpha_max = if phase == 0 { base.alpha0 } else { phase_amplitude(base.alpha0, l1, lambda_max) };
        let cross = phase_bases
            .iter()
            .flat_map(|prev: &Vec<ParamVector>| basis.vectors.iter().map(move |q| max_abs_inner(q, prev)))
            .fold(0.0, f64::max);

        let config = SurgeryConfig {
            iterations: deflation.iters_per_phase,
            spikes: deflation.spikes_per_phase,
            alpha0: alpha_max,
            alpha_min: base.alpha_min.min(alpha_max),
            ..base.clone()
        };
        let mut state = SurgeryState::new(spec, &theta, data, &config)?;
        state.deflate = accumulated.clone();
        state.phase = phase + 1;
        run_iterations(&mut state, spec, data, &config, &mut |_| Ok(true))?;
        log::info!(
            "deflated surgery phase {phase}: lambda_max {lambda_max:.4e} alpha_max {alpha_max:.4e} cross {cross:.2e}"
        );
        records.push(PhaseRecord {
            phase,
            lambda_max,
            alpha_max,
            eigenvalues: basis.eigenvalues.clone(),
            cross_correlation: cross,
            sigma_before: state.baseline.sigma,
            sigma_after: state.accuracy.sigma,
            log: state.log,
        });
        theta = state.theta;
        let mut all = accumulated.clone();
        all.extend(basis.vectors.iter().cloned());
        accumulated = orthonormalize(&all, 1e-8)?;
        phase_bases.push(basis.vectors);
    }
    Ok((theta, records))
}
