use super::HvpOracle;
use crate::error::Result;
use crate::models::{hvp, MlpSpec, Samples};
use crate::vecspace::ParamVector;

/// Mini-batch Hessian of an MLP at fixed parameters: one stochastic
/// Hessian per batch.
#[derive(Debug, Clone)]
pub struct ModelOracle {
    spec: MlpSpec,
    theta: ParamVector,
    batch: Samples,
    label: String,
}

impl ModelOracle {
    pub fn new(spec: MlpSpec, theta: ParamVector, batch: Samples) -> Result<Self> {
        crate::error::check_dim(spec.param_count(), theta.dim())?;
        if batch.is_empty() {
            return Err(crate::Error::EmptyBatch);
        }
        let label = format!("mlp {:?} batch n={}", spec.layer_widths, batch.len());
        Ok(Self {
            spec,
            theta,
            batch,
            label,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn batch(&self) -> &Samples {
        &self.batch
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }
}

impl HvpOracle for ModelOracle {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn apply(&self, v: &ParamVector) -> Result<ParamVector> {
        hvp(&self.spec, &self.theta, &self.batch, v)
    }

    fn provenance(&self) -> String {
        self.label.clone()
    }
}
