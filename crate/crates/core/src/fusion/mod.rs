//! Score files, trained affine fusion, fold averaging and voting.

mod calibration;
mod scores;
mod vote;

pub use calibration::{
    apply_calibration, check_aligned, fit_calibration, fused_nll, CalibrationModel, FitReport, GRADIENT_TOLERANCE,
    MAX_ITERATIONS,
};
pub use scores::ScoreMatrix;
pub use vote::{average_fold_scores, majority_vote, vote_systems};
