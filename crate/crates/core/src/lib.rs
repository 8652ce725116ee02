//! Octa-directional discrete selective scan.
//!
//! A feature map is read along every row, column and diagonal in both
//! directions, each scan-line runs its own state-space recurrence with a
//! fresh state, and the eight directional results are fused back onto the
//! grid with per-pixel softmax weights.

pub mod analysis;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod io;
pub mod omodule;
pub mod rng;
pub mod scanlines;
pub mod sscan;
pub mod tensor;

pub use error::{Error, Result};
pub use omodule::{o_merge, o_scan, o_ss2d, o_vss_block, DirectionWeights, DirectionalSequences, Encoder, EncoderConfig, Ss2dOptions, WeightMode};
pub use rng::Rng;
pub use scanlines::{build_index_set, Direction, ScanIndexSet, ScanLine};
pub use sscan::{DiscretizeOptions, DiscretizedParams, GateMode, Normalization, SsmParams, ZohRule};
pub use tensor::{DType, FeatureMap, Tensor};
