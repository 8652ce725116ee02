//! Traversal selection: a pointwise two-layer scorer applied to every
//! direction's output at every pixel, normalized by a softmax over
//! directions.

use crate::error::{Error, Result};
use crate::omodule::merge::DirectionWeights;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// `u = w2 . relu(W1 z + b1) + b2` for each direction-stacked channel
/// vector `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `(C_hidden, C)`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `(C_hidden,)`
    pub w2: Tensor,
    /// `(1,)`
    pub b2: Tensor,
}

/// Hidden width of the scorer: `max(C / 2, 4)`.
pub fn attention_hidden(channels: usize) -> usize {
    (channels / 2).max(4)
}

impl AttentionParams {
    pub fn init(channels: usize, rng: &mut Rng) -> Self {
        let hidden = attention_hidden(channels);
        Self {
            w1: Tensor::new(
                vec![hidden, channels],
                rng.normal_vec(hidden * channels, (2.0 / channels as f64).sqrt()),
            )
            .unwrap(),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::new(vec![hidden], rng.normal_vec(hidden, 1.0 / (hidden as f64).sqrt())).unwrap(),
            b2: Tensor::zeros(&[1]),
        }
    }

    pub fn channels(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Tensor::zeros(self.w1.shape()),
            b1: Tensor::zeros(self.b1.shape()),
            w2: Tensor::zeros(self.w2.shape()),
            b2: Tensor::zeros(self.b2.shape()),
        }
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }
}

/// Pre-activation hidden values kept for the backward pass,
/// `(B, D, HW, C_hidden)`.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    hidden_pre: Vec<f64>,
}

/// Per-direction, per-pixel scores `(B, D, HW)` for a stacked `(B, C, D, HW)`
/// tensor.
pub fn attention_scores(stacked: &Tensor, a: &AttentionParams) -> Result<(Tensor, ScoreCache)> {
    if stacked.rank() != 4 || stacked.shape()[1] != a.channels() {
        return Err(Error::Shape(format!(
            "stacked features must be (B, C={}, D, HW), got {:?}",
            a.channels(),
            stacked.shape()
        )));
    }
    let (b, c, d, hw) = (
        stacked.shape()[0],
        stacked.shape()[1],
        stacked.shape()[2],
        stacked.shape()[3],
    );
    let hid = a.hidden();
    let (w1, b1, w2, b2) = (a.w1.data(), a.b1.data(), a.w2.data(), a.b2.data()[0]);
    let mut scores = Tensor::zeros(&[b, d, hw]);
    let mut hidden_pre = vec![0.0; b * d * hw * hid];
    let z = stacked.data();
    for bi in 0..b {
        for k in 0..d {
            for p in 0..hw {
                let row = ((bi * d + k) * hw + p) * hid;
                let pre = &mut hidden_pre[row..row + hid];
                pre.copy_from_slice(b1);
                for ci in 0..c {
                    let zv = z[((bi * c + ci) * d + k) * hw + p];
                    for (h, pv) in pre.iter_mut().enumerate() {
                        *pv += w1[h * c + ci] * zv;
                    }
                }
                let u: f64 = pre.iter().zip(w2).map(|(pv, w)| pv.max(0.0) * w).sum();
                scores.data_mut()[(bi * d + k) * hw + p] = u + b2;
            }
        }
    }
    Ok((scores, ScoreCache { hidden_pre }))
}

pub fn o_attention(stacked: &Tensor, a: &AttentionParams) -> Result<DirectionWeights> {
    let (scores, _) = attention_scores(stacked, a)?;
    Ok(DirectionWeights::softmax(&scores))
}

/// Backward through softmax and the scorer. Given `d loss / d weights`
/// returns `d loss / d stacked` and parameter gradients.
pub fn attention_backward(
    stacked: &Tensor,
    a: &AttentionParams,
    cache: &ScoreCache,
    weights: &DirectionWeights,
    g_weights: &[f64],
) -> (Vec<f64>, AttentionParams) {
    let (b, c, d, hw) = (
        stacked.shape()[0],
        stacked.shape()[1],
        stacked.shape()[2],
        stacked.shape()[3],
    );
    let hid = a.hidden();
    let (w1, w2) = (a.w1.data(), a.w2.data());
    let mut grads = a.zeros_like();
    let mut gz = vec![0.0; stacked.len()];
    let w = weights.data();
    let mut g_hidden = vec![0.0; hid];
    for bi in 0..b {
        for p in 0..hw {
            let at = |k: usize| (bi * d + k) * hw + p;
            let dot: f64 = (0..d).map(|k| w[at(k)] * g_weights[at(k)]).sum();
            for k in 0..d {
                let gu = w[at(k)] * (g_weights[at(k)] - dot);
                grads.b2.data_mut()[0] += gu;
                let row = at(k) * hid;
                let pre = &cache.hidden_pre[row..row + hid];
                for h in 0..hid {
                    grads.w2.data_mut()[h] += gu * pre[h].max(0.0);
                    g_hidden[h] = if pre[h] > 0.0 { gu * w2[h] } else { 0.0 };
                    grads.b1.data_mut()[h] += g_hidden[h];
                }
                for ci in 0..c {
                    let zi = ((bi * c + ci) * d + k) * hw + p;
                    let zv = stacked.data()[zi];
                    let mut acc = 0.0;
                    for h in 0..hid {
                        grads.w1.data_mut()[h * c + ci] += g_hidden[h] * zv;
                        acc += w1[h * c + ci] * g_hidden[h];
                    }
                    gz[zi] += acc;
                }
            }
        }
    }
    (gz, grads)
}
