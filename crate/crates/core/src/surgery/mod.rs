//! Spike-directed post-hoc rebalancing.

mod controller;
mod deciles;
mod run;
mod solver;
mod weights;

pub use controller::{AmplitudeController, Anchor, ADAM_EPS};
pub use deciles::{decile_report, decile_table, DecileRow};
pub use run::{
    decide, final_report, phase_amplitude, run_deflated_surgery, run_iterations, run_surgery, spike_basis,
    surgery_step, surgery_step_with_basis, Decision, DeflationConfig, IterationRecord, PhaseRecord, SurgeryConfig,
    SurgeryReport, SurgeryState,
};
pub use solver::{
    per_spike_bounds, predict, solve_coefficients, Budget, BudgetMode, Solution, SpikeBounds, MAX_ITERATIONS,
};
pub use weights::{class_weights, recommend_p, ClassWeights, Recommendation, Target, WeightConfig, SEVERE_RATIO};
