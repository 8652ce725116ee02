//! The O-SS2D operator: gather along scan-lines, run the directional
//! recurrences, inverse-map, score, and fuse.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::omodule::attention::{attention_backward, attention_scores, AttentionParams, ScoreCache};
use crate::omodule::merge::{gather, place, scatter_add, slot_of, unplace, weighted_sum, DirectionWeights};
use crate::scanlines::{Direction, ScanIndexSet};
use crate::sscan::{discretize, discretize_backward, DiscreteGrads, DiscretizeOptions, DiscretizedParams, SsmParams};
use crate::tensor::{FeatureMap, Tensor};

/// Source of the per-pixel direction weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum WeightMode {
    /// Traversal selection through the attention scorer.
    #[default]
    Learned,
    /// Frozen `1 / D` everywhere.
    Uniform,
    /// All weight on one direction.
    OneHot(Direction),
    /// Uniform over a subset of directions.
    Subset(Vec<Direction>),
    /// Externally supplied weights, e.g. frozen from an earlier forward pass.
    /// A batch of one is shared by every sample.
    Fixed(DirectionWeights),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ss2dOptions {
    pub weights: WeightMode,
    pub discretize: DiscretizeOptions,
}

/// Forward intermediates needed by [`o_ss2d_backward`].
#[derive(Debug, Clone)]
pub struct Ss2dCache {
    dp: DiscretizedParams,
    /// gathered input `(B, C, D, n, L)`
    xs: Vec<f64>,
    /// inverse-mapped scan outputs `(B, C, D, HW)`
    stacked: Tensor,
    weights: DirectionWeights,
    scores: Option<ScoreCache>,
}

impl Ss2dCache {
    pub fn weights(&self) -> &DirectionWeights {
        &self.weights
    }

    pub fn stacked(&self) -> &Tensor {
        &self.stacked
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ss2dGrads {
    pub ssm: SsmParams,
    pub attn: AttentionParams,
}

fn check(x: &FeatureMap, ssm: &SsmParams, s: &ScanIndexSet) -> Result<()> {
    if (x.height(), x.width()) != (s.height(), s.width()) {
        return Err(Error::Shape(format!(
            "index set built for {}x{}, input is {}x{}",
            s.height(),
            s.width(),
            x.height(),
            x.width()
        )));
    }
    if x.channels() != ssm.channels() {
        return Err(Error::Shape(format!(
            "input has {} channels, SSM expects {}",
            x.channels(),
            ssm.channels()
        )));
    }
    if ssm.groups() != 1 && ssm.groups() != s.num_directions() {
        return Err(Error::Shape(format!(
            "SSM has {} parameter groups; expected 1 or {}",
            ssm.groups(),
            s.num_directions()
        )));
    }
    Ok(())
}

/// Runs every direction's recurrence over gathered sequences.
fn scan_all(dp: &DiscretizedParams, ssm: &SsmParams, xs: &[f64], rows: usize, channels: usize, s: &ScanIndexSet) -> Vec<f64> {
    let d = s.num_directions();
    let (n_max, l_max) = (s.n_max(), s.l_max());
    let mut ys = vec![0.0; xs.len()];
    let mut state = vec![0.0; dp.d_state];
    for r in 0..rows {
        let ch = r % channels;
        for k in 0..d {
            let kernel = dp.kernel(ssm.group_for(k));
            for l in 0..s.line_count(k) {
                let base = ((r * d + k) * n_max + l) * l_max;
                let len = s.line_len(k, l);
                kernel.forward_line(ch, &xs[base..base + len], &mut ys[base..base + len], &mut state);
            }
        }
    }
    ys
}

fn resolve_weights(mode: &WeightMode, batch: usize, s: &ScanIndexSet) -> Result<Option<DirectionWeights>> {
    let (d, hw) = (s.num_directions(), s.pixels());
    Ok(match mode {
        WeightMode::Learned => None,
        WeightMode::Uniform => Some(DirectionWeights::uniform(batch, d, hw)),
        WeightMode::OneHot(dir) => Some(DirectionWeights::one_hot(batch, d, hw, slot_of(s, *dir)?)),
        WeightMode::Subset(dirs) => {
            let slots = dirs.iter().map(|&dir| slot_of(s, dir)).collect::<Result<Vec<_>>>()?;
            Some(DirectionWeights::subset(batch, d, hw, &slots))
        }
        WeightMode::Fixed(w) if w.batch() == 1 && batch > 1 && (w.directions(), w.pixels()) == (d, hw) => {
            Some(w.broadcast(batch))
        }
        WeightMode::Fixed(w) => {
            if (w.batch(), w.directions(), w.pixels()) != (batch, d, hw) {
                return Err(Error::Shape(format!(
                    "fixed weights {:?} do not match (B={batch}, D={d}, HW={hw})",
                    w.tensor().shape()
                )));
            }
            Some(w.clone())
        }
    })
}

pub fn o_ss2d_forward(
    x: &FeatureMap,
    ssm: &SsmParams,
    attn: &AttentionParams,
    s: &Arc<ScanIndexSet>,
    opts: &Ss2dOptions,
) -> Result<(FeatureMap, Ss2dCache)> {
    check(x, ssm, s)?;
    let (b, c) = (x.batch(), x.channels());
    let rows = b * c;
    let dp = discretize(ssm, opts.discretize)?;
    let xs = gather(x.data(), rows, s).into_data();
    let ys = scan_all(&dp, ssm, &xs, rows, c, s);
    let stacked = Tensor::new(
        vec![b, c, s.num_directions(), s.pixels()],
        place(&ys, rows, s),
    )?;
    let (weights, scores) = match resolve_weights(&opts.weights, b, s)? {
        Some(w) => (w, None),
        None => {
            let (u, cache) = attention_scores(&stacked, attn)?;
            (DirectionWeights::softmax(&u), Some(cache))
        }
    };
    let y = FeatureMap::from_vec(b, c, s.height(), s.width(), weighted_sum(&stacked, &weights))?;
    Ok((
        y,
        Ss2dCache {
            dp,
            xs,
            stacked,
            weights,
            scores,
        },
    ))
}

pub fn o_ss2d(
    x: &FeatureMap,
    ssm: &SsmParams,
    attn: &AttentionParams,
    s: &Arc<ScanIndexSet>,
    opts: &Ss2dOptions,
) -> Result<FeatureMap> {
    o_ss2d_forward(x, ssm, attn, s, opts).map(|(y, _)| y)
}

/// Reverse pass. `gy` is `d loss / d output` in `(B, C, H, W)` layout;
/// returns `d loss / d input` in the same layout plus parameter gradients.
pub fn o_ss2d_backward(
    ssm: &SsmParams,
    attn: &AttentionParams,
    s: &Arc<ScanIndexSet>,
    opts: &Ss2dOptions,
    cache: &Ss2dCache,
    gy: &[f64],
) -> (Vec<f64>, Ss2dGrads) {
    let st = &cache.stacked;
    let (b, c, d, hw) = (st.shape()[0], st.shape()[1], st.shape()[2], st.shape()[3]);
    let w = cache.weights.data();

    // through the weighted sum
    let mut g_stacked = vec![0.0; st.len()];
    let mut g_weights = vec![0.0; b * d * hw];
    for bi in 0..b {
        for ci in 0..c {
            let gyr = &gy[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            for k in 0..d {
                let off = ((bi * c + ci) * d + k) * hw;
                let woff = (bi * d + k) * hw;
                for p in 0..hw {
                    g_stacked[off + p] = w[woff + p] * gyr[p];
                    g_weights[woff + p] += st.data()[off + p] * gyr[p];
                }
            }
        }
    }

    let attn_grads = match &cache.scores {
        Some(sc) => {
            let (gz, ga) = attention_backward(st, attn, sc, &cache.weights, &g_weights);
            g_stacked.iter_mut().zip(&gz).for_each(|(g, v)| *g += v);
            ga
        }
        None => attn.zeros_like(),
    };

    // inverse placement is a per-direction permutation; its adjoint is a gather
    let rows = b * c;
    let gys = unplace(&g_stacked, rows, s);

    let mut dgrads = DiscreteGrads::zeros(&cache.dp);
    let mut gxs = vec![0.0; gys.len()];
    let mut scratch = Vec::new();
    let (n_max, l_max) = (s.n_max(), s.l_max());
    for r in 0..rows {
        let ch = r % c;
        for k in 0..d {
            let kernel = cache.dp.kernel(ssm.group_for(k));
            for l in 0..s.line_count(k) {
                let base = ((r * d + k) * n_max + l) * l_max;
                let len = s.line_len(k, l);
                kernel.backward_line(
                    ch,
                    &cache.xs[base..base + len],
                    &gys[base..base + len],
                    &mut gxs[base..base + len],
                    &mut dgrads,
                    &mut scratch,
                );
            }
        }
    }
    let gx = scatter_add(&gxs, rows, s);
    let ssm_grads = discretize_backward(ssm, opts.discretize, &dgrads);
    (
        gx,
        Ss2dGrads {
            ssm: ssm_grads,
            attn: attn_grads,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanlines::build_index_set;
    use crate::sscan::{GateMode, Normalization};
    use crate::Rng;

    fn setup(c: usize, n: usize, seed: u64) -> (SsmParams, AttentionParams) {
        let mut rng = Rng::new(seed);
        (
            SsmParams::init(c, n, 1, GateMode::ConstantOne, &mut rng),
            AttentionParams::init(c, &mut rng),
        )
    }

    #[test]
    fn zero_in_zero_out() {
        let (ssm, attn) = setup(3, 2, 1);
        let s = Arc::new(build_index_set(4, 5));
        let y = o_ss2d(&FeatureMap::zeros(2, 3, 4, 5), &ssm, &attn, &s, &Ss2dOptions::default()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_grid_is_cb_times_x() {
        let (ssm, attn) = setup(2, 3, 2);
        let s = Arc::new(build_index_set(1, 1));
        let x = FeatureMap::from_vec(1, 2, 1, 1, vec![0.7, -1.3]).unwrap();
        let opts = Ss2dOptions::default();
        let y = o_ss2d(&x, &ssm, &attn, &s, &opts).unwrap();
        let dp = discretize(&ssm, opts.discretize).unwrap();
        for ch in 0..2 {
            let cb: f64 = (0..3).map(|n| dp.c[ch * 3 + n] * dp.b_bar[ch * 3 + n]).sum();
            assert!((y.data()[ch] - cb * x.data()[ch]).abs() < 1e-14);
        }
    }

    #[test]
    fn frozen_learned_weights_reproduce_the_forward() {
        let (ssm, attn) = setup(2, 2, 5);
        let s = Arc::new(build_index_set(3, 4));
        let mut rng = Rng::new(6);
        let x = FeatureMap::from_vec(1, 2, 3, 4, rng.normal_vec(24, 1.0)).unwrap();
        let (y, cache) = o_ss2d_forward(&x, &ssm, &attn, &s, &Ss2dOptions::default()).unwrap();
        let frozen = Ss2dOptions {
            weights: WeightMode::Fixed(cache.weights().clone()),
            ..Default::default()
        };
        assert_eq!(o_ss2d(&x, &ssm, &attn, &s, &frozen).unwrap(), y);
        let mut two = x.data().to_vec();
        two.extend_from_slice(x.data());
        let y2 = o_ss2d(&FeatureMap::from_vec(2, 2, 3, 4, two).unwrap(), &ssm, &attn, &s, &frozen).unwrap();
        assert_eq!(&y2.data()[..24], y.data());
        assert_eq!(&y2.data()[24..], y.data());
    }

    #[test]
    fn one_hot_needs_an_active_direction() {
        let (ssm, attn) = setup(1, 1, 3);
        let s = Arc::new(ScanIndexSet::build(3, 3, &Direction::subset(2).unwrap()));
        let opts = Ss2dOptions {
            weights: WeightMode::OneHot(Direction::DiagDR),
            discretize: DiscretizeOptions {
                normalization: Normalization::Continuous { directions: 2 },
                ..Default::default()
            },
        };
        assert!(o_ss2d(&FeatureMap::zeros(1, 1, 3, 3), &ssm, &attn, &s, &opts).is_err());
    }

    #[test]
    fn rejects_channel_and_group_mismatch() {
        let (ssm, attn) = setup(2, 2, 4);
        let s = Arc::new(build_index_set(3, 3));
        assert!(o_ss2d(&FeatureMap::zeros(1, 3, 3, 3), &ssm, &attn, &s, &Ss2dOptions::default()).is_err());
        let mut rng = Rng::new(0);
        let bad = SsmParams::init(2, 2, 3, GateMode::ConstantOne, &mut rng);
        assert!(o_ss2d(&FeatureMap::zeros(1, 2, 3, 3), &bad, &attn, &s, &Ss2dOptions::default()).is_err());
    }
}
