//! Cross-validation folds and accuracy reports.

mod folds;
mod report;

pub use folds::{make_folds, FoldPlan, DEFAULT_FOLDS};
pub use report::{average_accuracy, display_name, evaluate, evaluate_labels, render_table, Report};
