use std::sync::Arc;

use octoscan::omodule::{o_ss2d, AttentionParams};
use octoscan::sscan::{discretize, scanline_recurrence, semiseparable_matrix};
use octoscan::{
    build_index_set, o_merge, o_scan, DirectionWeights, DiscretizeOptions, FeatureMap, GateMode, Rng, Ss2dOptions,
    SsmParams, Tensor, WeightMode,
};
use proptest::prelude::*;

fn layer(c: usize, gate: GateMode, seed: u64) -> (SsmParams, AttentionParams) {
    let mut rng = Rng::new(seed);
    let ssm = SsmParams::init(c, 3, 1, gate, &mut rng);
    let attn = AttentionParams::init(c, &mut rng);
    (ssm, attn)
}

fn input(c: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
    let mut rng = Rng::new(seed ^ 0x5eed);
    FeatureMap::from_vec(1, c, h, w, rng.normal_vec(c * h * w, 1.0)).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // with one shared parameter set the direction set is closed under transposition
    #[test]
    fn transpose_equivariance(h in 1usize..7, w in 1usize..7, seed in 0u64..1000, learned in any::<bool>()) {
        let (ssm, attn) = layer(2, GateMode::AffineSigmoid, seed);
        let x = input(2, h, w, seed);
        let opts = Ss2dOptions {
            weights: if learned { WeightMode::Learned } else { WeightMode::Uniform },
            ..Default::default()
        };
        let y = o_ss2d(&x, &ssm, &attn, &Arc::new(build_index_set(h, w)), &opts).unwrap();
        let yt = o_ss2d(&x.transpose(), &ssm, &attn, &Arc::new(build_index_set(w, h)), &opts).unwrap();
        prop_assert!(max_diff(y.transpose().data(), yt.data()) < 1e-12);
    }

    #[test]
    fn line_order_does_not_matter(h in 1usize..7, w in 1usize..7, seed in 0u64..1000, slot in 0usize..8) {
        let (ssm, attn) = layer(2, GateMode::AffineSigmoid, seed);
        let x = input(2, h, w, seed);
        let s = build_index_set(h, w);
        let n = s.line_count(slot);
        let mut perm: Vec<usize> = (0..n).collect();
        Rng::new(seed).shuffle(&mut perm);
        let permuted = s.permute_lines(slot, &perm).unwrap();
        let opts = Ss2dOptions::default();
        let a = o_ss2d(&x, &ssm, &attn, &Arc::new(s), &opts).unwrap();
        let b = o_ss2d(&x, &ssm, &attn, &Arc::new(permuted), &opts).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn softmax_weights_are_distributions(scores in prop::collection::vec(-30.0f64..30.0, 8 * 5)) {
        let w = DirectionWeights::softmax(&Tensor::new(vec![1, 8, 5], scores).unwrap());
        prop_assert!(DirectionWeights::new(w.tensor().clone()).is_ok());
    }

    // a dominant score selects a single direction
    #[test]
    fn selection_limit(h in 1usize..6, w in 1usize..6, seed in 0u64..1000, k in 0usize..8) {
        let x = input(2, h, w, seed);
        let s = Arc::new(build_index_set(h, w));
        let seqs = o_scan(&x, &s).unwrap();
        let hw = h * w;
        let mut rng = Rng::new(seed);
        let mut u = rng.uniform_vec(8 * hw, -1.0, 1.0);
        for p in 0..hw {
            u[k * hw + p] += 50.0;
        }
        let soft = o_merge(&seqs, &DirectionWeights::softmax(&Tensor::new(vec![1, 8, hw], u).unwrap())).unwrap();
        let hard = o_merge(&seqs, &DirectionWeights::one_hot(1, 8, hw, k)).unwrap();
        // off-slot weights are below 7 e^-48, so only rounding of the selected weight remains
        let scale = x.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(max_diff(soft.data(), hard.data()) <= 1e-15 * scale);
    }

    // merging is linear in the weights
    #[test]
    fn uniform_merge_is_mean_of_one_hot(h in 1usize..6, w in 1usize..6, seed in 0u64..1000) {
        let x = input(1, h, w, seed);
        let s = Arc::new(build_index_set(h, w));
        let seqs = o_scan(&x, &s).unwrap();
        let hw = h * w;
        let uni = o_merge(&seqs, &DirectionWeights::uniform(1, 8, hw)).unwrap();
        let mut mean = vec![0.0; hw];
        for k in 0..8 {
            let y = o_merge(&seqs, &DirectionWeights::one_hot(1, 8, hw, k)).unwrap();
            for (m, v) in mean.iter_mut().zip(y.data()) {
                *m += v / 8.0;
            }
        }
        prop_assert!(max_diff(uni.data(), &mean) < 1e-14);
    }

    // scan then merge with one-hot weights copies the input back
    #[test]
    fn one_hot_merge_of_raw_sequences_is_identity(h in 1usize..6, w in 1usize..6, seed in 0u64..1000, k in 0usize..8) {
        let x = input(2, h, w, seed);
        let seqs = o_scan(&x, &Arc::new(build_index_set(h, w))).unwrap();
        let y = o_merge(&seqs, &DirectionWeights::one_hot(1, 8, h * w, k)).unwrap();
        prop_assert_eq!(y.data(), x.data());
    }

    #[test]
    fn recurrence_matches_dense_operator(len in 1usize..40, seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let p = SsmParams::init(1, 4, 1, GateMode::ConstantOne, &mut rng);
        let dp = discretize(&p, DiscretizeOptions::default()).unwrap();
        let k = dp.kernel(0);
        let x = rng.normal_vec(len, 1.0);
        let y = scanline_recurrence(&k, &Tensor::new(vec![1, len], x.clone()).unwrap(), &vec![true; len]).unwrap();
        let m = semiseparable_matrix(&k, 0, len).unwrap();
        let dense: Vec<f64> = (0..len)
            .map(|j| (0..len).map(|i| m.data()[j * len + i] * x[i]).sum())
            .collect();
        let scale = dense.iter().map(|v| v.abs()).fold(1e-300, f64::max);
        prop_assert!(max_diff(y.data(), &dense) / scale < 1e-12);
    }
}
