//! Small fully-connected classifier, data fixtures, trainer and baselines.

mod accuracy;
mod baselines;
mod data;
mod mlp;
mod scalar;
mod train;

pub use accuracy::{per_class_accuracy, population_std, ClassAccuracy};
pub use baselines::{
    bulk_projected_finetune, bulk_projected_finetune_fixed, empirical_priors, logit_adjust,
    tau_normalize, BulkFtLog,
};
pub use data::{BlobFixture, Dataset, Samples, SplitManifest, REPORT_ACCESS};
pub use mlp::{
    argmax, forward, gradient, hvp, hvp_of, logits, loss, loss_and_gradient, predict, Activation,
    Forward, Loss, MlpObjective, MlpSpec, TwiceDifferentiable,
};
pub use scalar::{Dual, Scalar};
pub use train::{fine_tune, train, NoHooks, Optimizer, TrainConfig, TrainHooks, TrainLog, Trained};
