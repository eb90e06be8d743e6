//! Experiment orchestration: splits, training, cross-validation,
//! significance tests and reports.

mod cv;
mod fit;
mod metrics;
mod report;
mod split;
mod stats;

pub use cv::{chance_level, permutation_cv, run_cv, run_holdout, train_and_test, CvResult, FoldResult, HoldoutResult};
pub use fit::{evaluate, fit, gather_f32, predict, EpochRecord, FitOutcome, Inputs, TrainConfig};
pub use metrics::ConfusionMatrix;
pub use report::{correct_family, ExperimentReport, ModelResult, TTestRecord, REPORT_SCHEMA};
pub use split::{class_members, holdout_split, proportional_allocation, stratified_kfold, FoldPlan};
pub use stats::{bonferroni, mean, paired_t_test, stdev, student_t_two_sided, TTest};
