//! Two-sample tests combining a binary endpoint with a time-to-event
//! endpoint: a difference-in-proportions score plus a weighted integrated
//! Kaplan-Meier difference, their variance and covariance estimators, and a
//! Frank-copula trial simulator.

pub mod copsim;
pub mod dataset;
pub mod error;
pub mod kernelhaz;
pub mod km;
pub mod lstat;
pub mod quad;
pub mod step;
pub mod weights;

pub use dataset::{
    parse_csv, to_csv, validate, validate_with, Arm, CovarianceForm, Strictness, StudyConfig,
    SubjectRecord, TrialDataset, ValidationReport, VarianceMode,
};
pub use error::{Error, Result};
pub use lstat::{l_statistic, l_statistic_with, Fitted, TestResult};
pub use step::StepFunction;
pub use weights::{WeightFunction, WeightSpec};
