//! Validation harnesses built on the core modules.

mod baselines;
mod bulkwalk;
mod fixture;
mod linearize;
mod stability;

pub use baselines::{compare_baselines, BaselineConfig, ComparisonRow, ComparisonTable};
pub use bulkwalk::{bulk_walk, bulk_walk_with, epsilon_for_displacement, BulkWalkConfig, BulkWalkLog, WalkStep};
pub use fixture::{fixture_model, fixture_spec, fixture_surgery_config, fixture_train_config, FixtureModel};
pub use linearize::{
    fit_additive, fit_power_law, linearization_sweep, linearization_sweep_with, log_grid, pearson, pooled_additive_fit, AdditiveFit,
    LinearizationSweepLog, SweepConfig, SweepPoint,
};
pub use stability::{stability_study, StabilityStudy, StabilityStudyConfig, TimingRow};
