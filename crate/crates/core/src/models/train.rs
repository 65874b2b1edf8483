//! Mini-batch trainer.

use serde::{Deserialize, Serialize};

use super::data::Samples;
use super::mlp::{loss_and_gradient, MlpSpec};
use crate::error::{Error, Result};
use crate::vecspace::{derive_seed, ParamVector, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.01,
            batch_size: 64,
            seed: 0,
            optimizer: Optimizer::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean mini-batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub theta: ParamVector,
    pub log: TrainLog,
}

/// Hooks into the training loop. The default implementation is a no-op.
pub trait TrainHooks {
    /// Called before each epoch with the current parameters.
    fn epoch_start(&mut self, _epoch: usize, _theta: &ParamVector) -> Result<()> {
        Ok(())
    }
    /// Applied to every gradient before the optimizer sees it and to every
    /// update before it is added to the parameters.
    fn project(&self, _v: &mut ParamVector) {}
}

pub struct NoHooks;
impl TrainHooks for NoHooks {}

/// Train from a seeded initialization.
pub fn train(spec: &MlpSpec, data: &Samples, config: &TrainConfig) -> Result<Trained> {
    let theta0 = spec.init(&mut Rng::derived(config.seed, &[0x1417]));
    fine_tune(spec, &theta0, data, config, &mut NoHooks)
}

/// Continue training from `theta0`.
pub fn fine_tune(
    spec: &MlpSpec,
    theta0: &ParamVector,
    data: &Samples,
    config: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<Trained> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if config.batch_size == 0 || !(config.lr > 0.0) {
        return Err(Error::InvalidArgument("batch_size and lr must be positive".into()));
    }
    let p = spec.param_count();
    let mut theta = theta0.clone();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut step = 0usize;
    let mut log = TrainLog {
        epoch_loss: Vec::with_capacity(config.epochs),
        steps: 0,
    };
    for epoch in 0..config.epochs {
        hooks.epoch_start(epoch, &theta)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        Rng::new(derive_seed(config.seed, &[0x5ef1e, epoch as u64])).shuffle(&mut order);
        let mut epoch_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = data.subset(chunk);
            let (loss, mut g) = loss_and_gradient(spec, &theta, &batch)?;
            if !loss.is_finite() || !g.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            hooks.project(&mut g);
            step += 1;
            let mut update = ParamVector::zeros(p);
            let u = update.as_mut_slice();
            match config.optimizer {
                Optimizer::Sgd { momentum } => {
                    for i in 0..p {
                        m[i] = momentum * m[i] + g.as_slice()[i];
                        u[i] = -config.lr * m[i];
                    }
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(step as i32);
                    let c2 = 1.0 - beta2.powi(step as i32);
                    for i in 0..p {
                        let gi = g.as_slice()[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        u[i] = -config.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
            hooks.project(&mut update);
            theta.axpy(1.0, &update)?;
            epoch_sum += loss;
            batches += 1;
        }
        let mean = epoch_sum / batches as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        log.epoch_loss.push(mean);
    }
    log.steps = step;
    Ok(Trained { theta, log })
}
