//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use octoscan::omodule::AttentionParams;
use octoscan::{build_index_set, FeatureMap, GateMode, Rng, ScanIndexSet, SsmParams};

/// One O-SS2D layer with its input on an `n x n` grid.
pub struct Layer {
    pub x: FeatureMap,
    pub ssm: SsmParams,
    pub attn: AttentionParams,
    pub index: Arc<ScanIndexSet>,
}

impl Layer {
    pub fn new(n: usize, channels: usize, d_state: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let ssm = SsmParams::init(channels, d_state, 1, GateMode::AffineSigmoid, &mut rng);
        let attn = AttentionParams::init(channels, &mut rng);
        let x = FeatureMap::from_vec(1, channels, n, n, rng.normal_vec(channels * n * n, 1.0))
            .expect("fixture shape");
        Layer {
            x,
            ssm,
            attn,
            index: Arc::new(build_index_set(n, n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes() {
        let l = Layer::new(6, 3, 2, 0);
        assert_eq!(l.x.data().len(), 3 * 36);
        assert_eq!(l.index.pixels(), 36);
    }
}
