//! Bias mitigation before, during and after training.

pub mod logistic;
pub mod postprocess;
pub mod preprocess;

pub use logistic::{
    fit_logistic_newton, train_logistic, LinearModel, Link, Objective, PenaltySpec, TrainOptions,
    TrainOutcome,
};
pub use preprocess::{di_remove, massage_labels, reweigh, FeatureRepair, MassageResult, RepairPlan, Reweighting, Swap};
pub use postprocess::{equalize_odds, per_group_thresholds, EqualizeOptions, EqualizedOdds, GroupThresholds, OddsCriterion, ThresholdObjective};
