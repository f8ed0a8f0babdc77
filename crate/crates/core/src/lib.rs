//! Fairness audits for binary classifiers: group metrics, ROC analysis,
//! dependence measures, individual-level audits, mitigation and a seeded
//! Beta score generator.

pub mod data;
pub mod depmeasure;
pub mod error;
pub mod fixtures;
pub mod groupfair;
pub mod indivfair;
pub mod mitigate;
pub mod rng;
pub mod rocstats;
pub mod stats;
pub mod synth;

pub use data::{
    apply_policy, load_csv, read_csv, validate, CsvSchema, CsvTable, Dataset, Group,
    PredictionSet, Record, ThresholdPolicy, ThresholdRule,
};
pub use error::{Error, Result};
