//! Evaluation protocols: repeated stratified k-fold CV with nested
//! parameter selection, leave-one-out regression, paired t-tests and
//! confidence intervals.

pub mod cv;
pub mod folds;
pub mod result;
pub mod stats;

pub use cv::{
    compare, cross_validate, cross_validate_on, fit, fit_split, leave_one_out, loo_predictions, predict, run_fold, score,
    Comparison, Experiment, ParamGrid, SplitFit, Targets,
};
pub use folds::{make_folds, CvPlan, Folds};
pub use result::{FoldRecord, RunResult, Selection};
pub use stats::{confidence_interval_95, mean, paired_t_test, std_dev, Direction, TTest};
