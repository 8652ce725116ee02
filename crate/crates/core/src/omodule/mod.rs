//! The O-SS2D operator and the blocks built on it.

pub mod attention;
pub mod block;
pub mod encoder;
pub mod merge;
pub mod ss2d;

pub use attention::{attention_backward, attention_hidden, attention_scores, o_attention, AttentionParams, ScoreCache};
pub use block::{
    layer_norm, o_vss_block, o_vss_block_backward, o_vss_block_forward, BlockCache, BlockParams, FfnParams,
    LayerNormParams, Projection,
};
pub use encoder::{Encoder, EncoderCache, EncoderConfig, NormalizationKind, Stage};
pub use merge::{o_merge, o_scan, stack_by_pixel, unstack, DirectionWeights, DirectionalSequences};
pub use ss2d::{o_ss2d, o_ss2d_backward, o_ss2d_forward, Ss2dCache, Ss2dGrads, Ss2dOptions, WeightMode};
