//! Post-hoc and fine-tuning rebalancing baselines.

use super::data::Samples;
use super::mlp::{argmax, MlpSpec};
use super::train::{fine_tune, TrainConfig, TrainHooks, Trained};
use crate::error::{Error, Result};
use crate::vecspace::{gram_schmidt_residual, max_abs_inner, ParamVector};

/// Replaces each classifier vector `w_c` (row `c` of the final weight
/// matrix) by `w_c / ‖w_c‖^τ`. Biases and earlier layers are untouched.
pub fn tau_normalize(spec: &MlpSpec, theta: &ParamVector, tau: f64) -> Result<ParamVector> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument("tau must be >= 0".into()));
    }
    let mut out = theta.clone();
    if tau == 0.0 {
        return Ok(out);
    }
    let (off, rows, cols) = spec.classifier_block();
    let data = out.as_mut_slice();
    for c in 0..rows {
        let row = &mut data[off + c * cols..off + (c + 1) * cols];
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            log::warn!("tau_normalize: classifier row {c} has zero norm, left unchanged");
            continue;
        }
        let s = n.powf(tau);
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    Ok(out)
}

/// Class priors (empirical frequencies) of a split.
pub fn empirical_priors(samples: &Samples, classes: usize) -> Vec<f64> {
    let counts = samples.class_counts(classes);
    let n = samples.len() as f64;
    counts.iter().map(|&c| c as f64 / n).collect()
}

/// Predictions `argmax_c f_c(x) − τ log π_c` for row-major logits.
///
/// The shift is taken relative to the largest log-prior, so uniform priors
/// add exactly zero and leave every prediction unchanged.
pub fn logit_adjust(logits: &[f64], classes: usize, priors: &[f64], tau: f64) -> Result<Vec<usize>> {
    if priors.len() != classes {
        return Err(Error::DimensionMismatch {
            expected: classes,
            got: priors.len(),
        });
    }
    if priors.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidArgument("priors must be positive".into()));
    }
    let logs: Vec<f64> = priors.iter().map(|p| p.ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift: Vec<f64> = logs.iter().map(|l| tau * (top - l)).collect();
    Ok(logits
        .chunks(classes)
        .map(|row| {
            let adj: Vec<f64> = row.iter().zip(&shift).map(|(z, s)| z + s).collect();
            argmax(&adj)
        })
        .collect())
}

/// Per-run diagnostics of projected fine-tuning.
#[derive(Debug, Clone, Default)]
pub struct BulkFtLog {
    /// Largest `|qᵢᵀg| / ‖g‖` over every applied gradient and update.
    pub max_leak: f64,
    pub refreshes: usize,
}

struct Projector<'a, F> {
    basis: Vec<ParamVector>,
    refresh: Option<&'a mut F>,
    refresh_every: usize,
    log: std::cell::RefCell<BulkFtLog>,
}

impl<F> TrainHooks for Projector<'_, F>
where
    F: FnMut(&ParamVector) -> Result<Vec<ParamVector>>,
{
    fn epoch_start(&mut self, epoch: usize, theta: &ParamVector) -> Result<()> {
        if epoch > 0 && self.refresh_every > 0 && epoch.is_multiple_of(self.refresh_every) {
            if let Some(f) = self.refresh.as_mut() {
                self.basis = f(theta)?;
                self.log.borrow_mut().refreshes += 1;
            }
        }
        Ok(())
    }

    fn project(&self, v: &mut ParamVector) {
        if self.basis.is_empty() {
            return;
        }
        let r = gram_schmidt_residual(v, &self.basis).expect("basis dimension checked");
        let n = r.norm();
        if n > 0.0 {
            let leak = max_abs_inner(&r, &self.basis) / n;
            let mut log = self.log.borrow_mut();
            log.max_leak = log.max_leak.max(leak);
        }
        *v = r;
    }
}

/// Fine-tunes with every gradient and every optimizer update projected
/// onto the orthogonal complement of `basis`. When `refresh` is given the
/// basis is recomputed from the current parameters every
/// `refresh_every` epochs.
pub fn bulk_projected_finetune<F>(
    spec: &MlpSpec,
    theta: &ParamVector,
    data: &Samples,
    basis: &[ParamVector],
    config: &TrainConfig,
    refresh_every: usize,
    refresh: Option<&mut F>,
) -> Result<(Trained, BulkFtLog)>
where
    F: FnMut(&ParamVector) -> Result<Vec<ParamVector>>,
{
    for q in basis {
        crate::error::check_dim(theta.dim(), q.dim())?;
    }
    let mut hooks = Projector {
        basis: basis.to_vec(),
        refresh,
        refresh_every,
        log: Default::default(),
    };
    let out = fine_tune(spec, theta, data, config, &mut hooks)?;
    Ok((out, hooks.log.into_inner()))
}

type NoRefresh = fn(&ParamVector) -> Result<Vec<ParamVector>>;

/// [`bulk_projected_finetune`] with a fixed basis.
pub fn bulk_projected_finetune_fixed(
    spec: &MlpSpec,
    theta: &ParamVector,
    data: &Samples,
    basis: &[ParamVector],
    config: &TrainConfig,
) -> Result<(Trained, BulkFtLog)> {
    bulk_projected_finetune::<NoRefresh>(spec, theta, data, basis, config, 0, None)
}
