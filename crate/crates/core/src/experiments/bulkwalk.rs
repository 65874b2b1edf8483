//! Directed random walk orthogonal to the spike subspace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanczos::top_eigenpairs;
use crate::models::{loss, per_class_accuracy, Dataset, MlpSpec, Samples};
use crate::operators::{stratified_batch, ModelOracle};
use crate::surgery::spike_basis;
use crate::vecspace::{derive_seed, gram_schmidt_residual, max_abs_inner, ParamVector, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BulkWalkConfig {
    pub steps: usize,
    pub epsilon: f64,
    #[serde(default = "default_wall")]
    pub wall_tol: f64,
    pub spikes: usize,
    #[serde(default = "default_order")]
    pub lanczos_order: usize,
    #[serde(default = "default_hvp")]
    pub hvp_per_class: usize,
    /// Most archived directions kept; older ones are dropped first.
    #[serde(default = "default_cap")]
    pub history_cap: usize,
    #[serde(default = "default_true")]
    pub track_lambda: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_wall() -> f64 {
    0.5
}
fn default_order() -> usize {
    10
}
fn default_hvp() -> usize {
    64
}
fn default_cap() -> usize {
    64
}
fn default_true() -> bool {
    true
}

impl BulkWalkConfig {
    pub fn new(steps: usize, epsilon: f64, spikes: usize) -> Self {
        Self {
            steps,
            epsilon,
            wall_tol: default_wall(),
            spikes,
            lanczos_order: default_order(),
            hvp_per_class: default_hvp(),
            history_cap: default_cap(),
            track_lambda: true,
            seed: 0,
        }
    }
}

/// Step size giving a cumulative relative displacement near `target`
/// when the direction stays fixed.
pub fn epsilon_for_displacement(theta: &ParamVector, steps: usize, target: f64) -> f64 {
    target * theta.norm() / steps as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkStep {
    pub step: usize,
    pub loss: f64,
    pub global: f64,
    pub per_class: Vec<f64>,
    pub lambda_max: Option<f64>,
    pub wall: bool,
    pub new_direction: bool,
    /// `max_i |q_iᵀd|` for the direction actually taken.
    pub max_inner: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkWalkLog {
    pub epsilon: f64,
    pub start_loss: f64,
    pub start_global: f64,
    pub start_per_class: Vec<f64>,
    pub start_lambda: Option<f64>,
    pub steps: Vec<WalkStep>,
    pub archived: usize,
    pub displacement: f64,
    /// The walk stopped early because no bulk direction was left.
    pub absorbed: bool,
}

impl BulkWalkLog {
    pub fn max_loss_change(&self) -> f64 {
        self.steps.iter().map(|s| (s.loss - self.start_loss).abs()).fold(0.0, f64::max)
    }

    pub fn max_class_change(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|s| s.per_class.iter().zip(&self.start_per_class).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_inner(&self) -> f64 {
        self.steps.iter().map(|s| s.max_inner).fold(0.0, f64::max)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("# step loss global lambda_max wall new max_inner\n");
        let lam = |l: Option<f64>| l.map_or("nan".to_string(), |v| format!("{v:.6e}"));
        s.push_str(&format!("0 {:.8} {:.6} {} 0 0 0\n", self.start_loss, self.start_global, lam(self.start_lambda)));
        for st in &self.steps {
            s.push_str(&format!(
                "{} {:.8} {:.6} {} {} {} {:.3e}\n",
                st.step + 1,
                st.loss,
                st.global,
                lam(st.lambda_max),
                st.wall as u8,
                st.new_direction as u8,
                st.max_inner
            ));
        }
        s
    }
}

fn fresh_direction(rng: &mut Rng, dim: usize, basis: &[ParamVector], history: &[ParamVector]) -> Result<Option<ParamVector>> {
    let z = rng.gaussian_vector(dim, 1.0);
    let mut union: Vec<ParamVector> = basis.to_vec();
    union.extend(history.iter().cloned());
    // archived directions may overlap the current spikes
    let mut against: Vec<ParamVector> = Vec::with_capacity(union.len());
    for v in &union {
        let r = gram_schmidt_residual(v, &against)?;
        if let Some(u) = r.normalized().filter(|_| r.norm() > 1e-10 * v.norm()) {
            against.push(u);
        }
    }
    let d = gram_schmidt_residual(&z, &against)?;
    // a second pass keeps the residual orthogonal at rounding level
    let d = gram_schmidt_residual(&d, &against)?;
    if d.norm() <= 1e-8 * z.norm() {
        return Ok(None);
    }
    Ok(d.normalized())
}

/// Bulk walk with spike bases supplied by `basis_at(θ, step)`; the
/// returned vectors must be orthonormal.
pub fn bulk_walk_with(
    spec: &MlpSpec,
    theta: &ParamVector,
    eval: &Samples,
    config: &BulkWalkConfig,
    basis_at: &mut dyn FnMut(&ParamVector, usize) -> Result<Vec<ParamVector>>,
    lambda_at: &mut dyn FnMut(&ParamVector, usize) -> Result<Option<f64>>,
) -> Result<BulkWalkLog> {
    if !(config.epsilon > 0.0) || !(config.wall_tol > 0.0 && config.wall_tol <= 1.0) {
        return Err(Error::InvalidArgument("need epsilon > 0 and wall_tol in (0, 1]".into()));
    }
    let start_acc = per_class_accuracy(spec, theta, eval)?;
    let mut log = BulkWalkLog {
        epsilon: config.epsilon,
        start_loss: loss(spec, theta, eval)?,
        start_global: start_acc.global,
        start_per_class: start_acc.per_class,
        start_lambda: lambda_at(theta, 0)?,
        steps: Vec::with_capacity(config.steps),
        archived: 0,
        displacement: 0.0,
        absorbed: false,
    };
    let mut rng = Rng::derived(config.seed, &[0xb01c]);
    let mut current = theta.clone();
    let mut direction: Option<ParamVector> = None;
    let mut history: Vec<ParamVector> = Vec::new();
    for step in 0..config.steps {
        let basis = basis_at(&current, step)?;
        let mut wall = false;
        let mut new_direction = false;
        let reprojected = match &direction {
            Some(d) => {
                let r = gram_schmidt_residual(d, &basis)?;
                let r = gram_schmidt_residual(&r, &basis)?;
                let n = r.norm();
                if n < config.wall_tol {
                    wall = true;
                    None
                } else {
                    Some(r.scaled(1.0 / n))
                }
            }
            None => None,
        };
        let d = match reprojected {
            Some(d) => d,
            None => {
                if let Some(old) = direction.take().filter(|_| wall) {
                    history.push(old);
                    log.archived += 1;
                    if history.len() > config.history_cap {
                        history.remove(0);
                    }
                }
                new_direction = true;
                match fresh_direction(&mut rng, theta.dim(), &basis, &history)? {
                    Some(d) => d,
                    None => {
                        log::warn!("bulk walk: every direction is absorbed at step {step}, stopping");
                        log.absorbed = true;
                        break;
                    }
                }
            }
        };
        let max_inner = max_abs_inner(&d, &basis);
        current.axpy(config.epsilon, &d)?;
        direction = Some(d);
        let acc = per_class_accuracy(spec, &current, eval)?;
        log.steps.push(WalkStep {
            step,
            loss: loss(spec, &current, eval)?,
            global: acc.global,
            per_class: acc.per_class,
            lambda_max: lambda_at(&current, step + 1)?,
            wall,
            new_direction,
            max_inner,
        });
    }
    log.displacement = current.sub(theta)?.norm() / theta.norm();
    Ok(log)
}

/// Bulk walk with the top `config.spikes` Hessian eigenvectors recomputed
/// at every step on a fresh seeded training batch. Loss and accuracies are
/// measured on the sensitivity split.
pub fn bulk_walk(spec: &MlpSpec, theta: &ParamVector, data: &Dataset, config: &BulkWalkConfig) -> Result<BulkWalkLog> {
    let batch_for = |step: usize| -> Result<Samples> {
        let seed = derive_seed(config.seed, &[0xba7c, step as u64]);
        stratified_batch(data.train(), data.classes(), config.hvp_per_class, &mut Rng::new(seed))
    };
    let mut basis_at = |th: &ParamVector, step: usize| -> Result<Vec<ParamVector>> {
        if config.spikes == 0 {
            return Ok(vec![]);
        }
        let seed = derive_seed(config.seed, &[0x57a7, step as u64]);
        Ok(spike_basis(spec, th, batch_for(step)?, &[], config.lanczos_order, config.spikes, seed)?.vectors)
    };
    let mut lambda_at = |th: &ParamVector, step: usize| -> Result<Option<f64>> {
        if !config.track_lambda {
            return Ok(None);
        }
        let oracle = ModelOracle::new(spec.clone(), th.clone(), batch_for(step)?)?;
        let b = top_eigenpairs(&oracle, 4, 1, derive_seed(config.seed, &[0x1a4, step as u64]))?;
        Ok(b.eigenvalues.first().copied())
    };
    bulk_walk_with(spec, theta, data.sensitivity(), config, &mut basis_at, &mut lambda_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecspace::Rng;

    fn toy() -> (MlpSpec, ParamVector, Samples) {
        // 1 input, 1 hidden unit, 2 classes: p = 6
        let spec = MlpSpec::tanh(1, &[1], 2).unwrap();
        let theta = spec.init(&mut Rng::new(1));
        let data = Samples::new(1, vec![0.5, -0.5, 1.0], vec![0, 1, 0]).unwrap();
        (spec, theta, data)
    }

    #[test]
    fn full_basis_walls_immediately() {
        let (spec, theta, data) = toy();
        let p = theta.dim();
        let mut full = |_: &ParamVector, _: usize| Ok((0..p).map(|i| ParamVector::unit(p, i)).collect());
        let mut none = |_: &ParamVector, _: usize| Ok(None);
        let cfg = BulkWalkConfig::new(5, 0.1, p);
        let log = bulk_walk_with(&spec, &theta, &data, &cfg, &mut full, &mut none).unwrap();
        assert!(log.absorbed);
        assert!(log.steps.is_empty());
        assert_eq!(log.displacement, 0.0);
    }

    #[test]
    fn empty_basis_is_a_straight_walk() {
        let (spec, theta, data) = toy();
        let mut empty = |_: &ParamVector, _: usize| Ok(vec![]);
        let mut none = |_: &ParamVector, _: usize| Ok(None);
        let cfg = BulkWalkConfig::new(7, 0.05, 0);
        let log = bulk_walk_with(&spec, &theta, &data, &cfg, &mut empty, &mut none).unwrap();
        assert_eq!(log.steps.len(), 7);
        assert!(log.steps.iter().skip(1).all(|s| !s.new_direction && !s.wall));
        let expected = 7.0 * 0.05 / theta.norm();
        assert!((log.displacement - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn rotating_basis_triggers_walls_and_archives() {
        let (spec, theta, data) = toy();
        let p = theta.dim();
        // the basis at step t spans every coordinate except t mod p, so each
        // new basis absorbs the previous direction
        let mut rotating = |_: &ParamVector, t: usize| {
            Ok((0..p).filter(|&i| i != t % p).map(|i| ParamVector::unit(p, i)).collect())
        };
        let mut none = |_: &ParamVector, _: usize| Ok(None);
        let cfg = BulkWalkConfig::new(4, 0.01, 1);
        let log = bulk_walk_with(&spec, &theta, &data, &cfg, &mut rotating, &mut none).unwrap();
        assert_eq!(log.steps.len(), 4);
        assert!(log.steps[1..].iter().all(|s| s.wall && s.new_direction));
        assert_eq!(log.archived, 3);
        assert!(log.max_inner() <= 1e-12);
    }
}
