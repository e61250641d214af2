//! Layer vocabulary for the three network families.
//!
//! Every layer is a function on a [`Tape`](crate::tensor::Tape) taking
//! batched tensors: `[B x F x T x C]` for 2D feature maps, `[B x T x D]`
//! for frame sequences and `[B x D]` for vectors.

mod attention;
mod conv;
mod dense;
mod norm;
mod pool;

pub use attention::{
    attention_pool, frame_scores, weighted_mean, weighted_std, AttentionParams, AttentionPoolConfig, STD_EPSILON,
};
pub use conv::{conv1d_ctx, conv2d};
pub use dense::{dense, dropout, Activation};
pub use norm::{batchnorm, BatchNormStats, BN_EPSILON, BN_MOMENTUM};
pub use pool::{maxpool_freq, mfm};

/// Training or inference behaviour for dropout and batch normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
