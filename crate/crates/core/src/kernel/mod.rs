//! Dense numerical kernel: matrices, attention, normalization, initializers and Adam.

mod adam;
mod attention;
mod gradcheck;
mod init;
mod layers;
mod matrix;

pub use adam::{AdamConfig, AdamState, ParamSet};
pub use attention::{
    attention_backward, attention_forward, scaled_dot_attention, softmax_rows, AttentionGrads,
    AttentionMask, MASK_FILL,
};
pub use gradcheck::{finite_difference_check, GradCheckReport, RELATIVE_FLOOR};
pub use init::{orthogonal_init, seeded_rng, uniform_init, SeededRng};
pub use layers::{
    feed_forward_backward, feed_forward_forward, layer_norm, layer_norm_backward,
    layer_norm_forward, position_wise_ffn, FeedForwardCache, FeedForwardGrads, LayerNormCache,
    LAYER_NORM_EPS,
};
pub use matrix::Matrix;
