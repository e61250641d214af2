//! Training regime, checkpoints and segment scoring.

mod batch;
mod checkpoint;
mod optim;
mod trainer;

pub use batch::{assemble, crop_start, sample_crop, BandNorm, Example};
pub use checkpoint::Checkpoint;
pub use optim::{Adam, EarlyStopping, StopDecision, TrainConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use trainer::{
    argmax, cross_entropy, predict, predict_segment, score_normalized, train, EpochLog, TrainOutcome, EVAL_BATCH,
};
