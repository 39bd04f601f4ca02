//! Closed-form concentration and mixing bounds, and the Monte-Carlo
//! experiments that test them.

mod bounds;
mod experiments;
mod reward;
mod wasserstein;

pub use bounds::{
    correlation_decay_bound, default_epsilon_grid, iid_tail_bound, projection_tail_bound,
    subtraj_tail_bound, subtraj_tail_bound_from_covariance, subtrajectory_talagrand_constant,
    sv_tail_bound, talagrand_constant, Metric, Regime, TailBound, TransportConstant,
};
pub use experiments::{
    correlation_decay_experiment, ergodic_average_experiment, projection_ratio_experiment,
    CorrelationReport, CorrelationRow, ErgodicConfig, ProjectionConfig, Sampling, MIN_TAIL_TRIALS,
};
pub use reward::LipschitzReward;
pub use wasserstein::{
    mixing_bound_check, wasserstein_gaussians, wasserstein_to_stationary, MixingReport, MixingRow,
};
