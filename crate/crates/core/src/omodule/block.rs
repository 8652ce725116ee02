//! O-VSS block: `x1 = x + O-SS2D(LN(x))`, `out = x1 + FFN(LN(x1))`.
//!
//! Layer normalization acts per pixel across channels; the FFN is a
//! pointwise `C -> r C -> C` map with a rectifier.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::omodule::attention::AttentionParams;
use crate::omodule::ss2d::{o_ss2d_backward, o_ss2d_forward, Ss2dCache, Ss2dOptions};
use crate::rng::Rng;
use crate::scanlines::ScanIndexSet;
use crate::sscan::{GateMode, SsmParams};
use crate::tensor::{FeatureMap, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const FFN_RATIO: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNormParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gamma: Tensor::zeros(self.gamma.shape()),
            beta: Tensor::zeros(self.beta.shape()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Normalizes each pixel's channel vector of a `(B, C, HW)` buffer.
pub fn layer_norm(x: &[f64], b: usize, c: usize, hw: usize, p: &LayerNormParams) -> (Vec<f64>, LayerNormCache) {
    let mut out = vec![0.0; x.len()];
    let mut normalized = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; b * hw];
    let (gamma, beta) = (p.gamma.data(), p.beta.data());
    for bi in 0..b {
        for px in 0..hw {
            let at = |ci: usize| (bi * c + ci) * hw + px;
            let mean = (0..c).map(|ci| x[at(ci)]).sum::<f64>() / c as f64;
            let var = (0..c).map(|ci| (x[at(ci)] - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[bi * hw + px] = is;
            for ci in 0..c {
                let n = (x[at(ci)] - mean) * is;
                normalized[at(ci)] = n;
                out[at(ci)] = gamma[ci] * n + beta[ci];
            }
        }
    }
    (out, LayerNormCache { normalized, inv_std })
}

pub fn layer_norm_backward(
    g: &[f64],
    b: usize,
    c: usize,
    hw: usize,
    p: &LayerNormParams,
    cache: &LayerNormCache,
    grads: &mut LayerNormParams,
) -> Vec<f64> {
    let mut gx = vec![0.0; g.len()];
    let gamma = p.gamma.data();
    for bi in 0..b {
        for px in 0..hw {
            let at = |ci: usize| (bi * c + ci) * hw + px;
            let mut mean_g = 0.0;
            let mut mean_gn = 0.0;
            for ci in 0..c {
                let gn = g[at(ci)] * gamma[ci];
                let n = cache.normalized[at(ci)];
                grads.gamma.data_mut()[ci] += g[at(ci)] * n;
                grads.beta.data_mut()[ci] += g[at(ci)];
                mean_g += gn;
                mean_gn += gn * n;
            }
            mean_g /= c as f64;
            mean_gn /= c as f64;
            let is = cache.inv_std[bi * hw + px];
            for ci in 0..c {
                let gn = g[at(ci)] * gamma[ci];
                gx[at(ci)] = is * (gn - mean_g - cache.normalized[at(ci)] * mean_gn);
            }
        }
    }
    gx
}

/// Pointwise affine channel map `(C_in) -> (C_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `(C_out, C_in)`
    pub w: Tensor,
    pub b: Tensor,
}

impl Projection {
    pub fn init(c_in: usize, c_out: usize, scale: f64, rng: &mut Rng) -> Self {
        Self {
            w: Tensor::new(
                vec![c_out, c_in],
                rng.normal_vec(c_in * c_out, scale / (c_in as f64).sqrt()),
            )
            .unwrap(),
            b: Tensor::zeros(&[c_out]),
        }
    }

    pub fn c_in(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Tensor::zeros(self.w.shape()),
            b: Tensor::zeros(self.b.shape()),
        }
    }

    /// Applies the map at every pixel of a `(B, C_in, HW)` buffer.
    pub fn apply(&self, x: &[f64], b: usize, hw: usize) -> Vec<f64> {
        let (ci_n, co_n) = (self.c_in(), self.c_out());
        let (w, bias) = (self.w.data(), self.b.data());
        let mut out = vec![0.0; b * co_n * hw];
        for bi in 0..b {
            for co in 0..co_n {
                let dst = &mut out[(bi * co_n + co) * hw..(bi * co_n + co + 1) * hw];
                dst.fill(bias[co]);
                for ci in 0..ci_n {
                    let wv = w[co * ci_n + ci];
                    let src = &x[(bi * ci_n + ci) * hw..(bi * ci_n + ci + 1) * hw];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += wv * s);
                }
            }
        }
        out
    }

    pub fn backward(&self, x: &[f64], g: &[f64], b: usize, hw: usize, grads: &mut Projection) -> Vec<f64> {
        let (ci_n, co_n) = (self.c_in(), self.c_out());
        let w = self.w.data();
        let mut gx = vec![0.0; b * ci_n * hw];
        for bi in 0..b {
            for co in 0..co_n {
                let gr = &g[(bi * co_n + co) * hw..(bi * co_n + co + 1) * hw];
                grads.b.data_mut()[co] += gr.iter().sum::<f64>();
                for ci in 0..ci_n {
                    let src = &x[(bi * ci_n + ci) * hw..(bi * ci_n + ci + 1) * hw];
                    grads.w.data_mut()[co * ci_n + ci] += gr.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    let wv = w[co * ci_n + ci];
                    gx[(bi * ci_n + ci) * hw..(bi * ci_n + ci + 1) * hw]
                        .iter_mut()
                        .zip(gr)
                        .for_each(|(d, s)| *d += wv * s);
                }
            }
        }
        gx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    pub up: Projection,
    pub down: Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub norm1: LayerNormParams,
    pub ssm: SsmParams,
    pub attn: AttentionParams,
    pub norm2: LayerNormParams,
    pub ffn: FfnParams,
}

impl BlockParams {
    /// `groups` is 1 for a shared SSM kernel or the direction count for
    /// per-direction parameters.
    pub fn init(channels: usize, d_state: usize, groups: usize, gate: GateMode, rng: &mut Rng) -> Self {
        let hidden = FFN_RATIO * channels;
        Self {
            norm1: LayerNormParams::new(channels),
            ssm: SsmParams::init(channels, d_state, groups, gate, rng),
            attn: AttentionParams::init(channels, rng),
            norm2: LayerNormParams::new(channels),
            ffn: FfnParams {
                up: Projection::init(channels, hidden, 2f64.sqrt(), rng),
                down: Projection::init(hidden, channels, 0.5, rng),
            },
        }
    }

    pub fn channels(&self) -> usize {
        self.norm1.gamma.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            norm1: self.norm1.zeros_like(),
            ssm: self.ssm.zeros_like(),
            attn: self.attn.zeros_like(),
            norm2: self.norm2.zeros_like(),
            ffn: FfnParams {
                up: self.ffn.up.zeros_like(),
                down: self.ffn.down.zeros_like(),
            },
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("norm1.gamma".to_string(), &self.norm1.gamma),
            ("norm1.beta".to_string(), &self.norm1.beta),
        ];
        out.extend(self.ssm.named_tensors().into_iter().map(|(n, t)| (format!("ssm.{n}"), t)));
        out.extend(self.attn.named_tensors().into_iter().map(|(n, t)| (format!("attn.{n}"), t)));
        out.extend([
            ("norm2.gamma".to_string(), &self.norm2.gamma),
            ("norm2.beta".to_string(), &self.norm2.beta),
            ("ffn.up.w".to_string(), &self.ffn.up.w),
            ("ffn.up.b".to_string(), &self.ffn.up.b),
            ("ffn.down.w".to_string(), &self.ffn.down.w),
            ("ffn.down.b".to_string(), &self.ffn.down.b),
        ]);
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![
            ("norm1.gamma".to_string(), &mut self.norm1.gamma),
            ("norm1.beta".to_string(), &mut self.norm1.beta),
        ];
        out.extend(self.ssm.named_tensors_mut().into_iter().map(|(n, t)| (format!("ssm.{n}"), t)));
        out.extend(self.attn.named_tensors_mut().into_iter().map(|(n, t)| (format!("attn.{n}"), t)));
        out.extend([
            ("norm2.gamma".to_string(), &mut self.norm2.gamma),
            ("norm2.beta".to_string(), &mut self.norm2.beta),
            ("ffn.up.w".to_string(), &mut self.ffn.up.w),
            ("ffn.up.b".to_string(), &mut self.ffn.up.b),
            ("ffn.down.w".to_string(), &mut self.ffn.down.w),
            ("ffn.down.b".to_string(), &mut self.ffn.down.b),
        ]);
        out
    }
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    ln1: LayerNormCache,
    ss2d: Ss2dCache,
    n2: Vec<f64>,
    ln2: LayerNormCache,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl BlockCache {
    pub fn ss2d(&self) -> &Ss2dCache {
        &self.ss2d
    }
}

pub fn o_vss_block_forward(
    x: &FeatureMap,
    bp: &BlockParams,
    s: &Arc<ScanIndexSet>,
    opts: &Ss2dOptions,
) -> Result<(FeatureMap, BlockCache)> {
    if x.channels() != bp.channels() {
        return Err(Error::Shape(format!(
            "block expects {} channels, input has {}",
            bp.channels(),
            x.channels()
        )));
    }
    let (b, c, h, w) = (x.batch(), x.channels(), x.height(), x.width());
    let hw = h * w;
    let (n1, ln1) = layer_norm(x.data(), b, c, hw, &bp.norm1);
    let n1 = FeatureMap::from_vec(b, c, h, w, n1)?;
    let (s_out, ss2d) = o_ss2d_forward(&n1, &bp.ssm, &bp.attn, s, opts)?;
    let x1: Vec<f64> = x.data().iter().zip(s_out.data()).map(|(a, b)| a + b).collect();
    let (n2, ln2) = layer_norm(&x1, b, c, hw, &bp.norm2);
    let hidden_pre = bp.ffn.up.apply(&n2, b, hw);
    let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
    let f = bp.ffn.down.apply(&hidden, b, hw);
    let out: Vec<f64> = x1.iter().zip(&f).map(|(a, b)| a + b).collect();
    Ok((
        FeatureMap::from_vec(b, c, h, w, out)?,
        BlockCache {
            ln1,
            ss2d,
            n2,
            ln2,
            hidden_pre,
            hidden,
        },
    ))
}

pub fn o_vss_block(x: &FeatureMap, bp: &BlockParams, s: &Arc<ScanIndexSet>, opts: &Ss2dOptions) -> Result<FeatureMap> {
    o_vss_block_forward(x, bp, s, opts).map(|(y, _)| y)
}

/// Reverse pass of the block; `g_out` and the returned input gradient use
/// the `(B, C, H, W)` layout.
pub fn o_vss_block_backward(
    bp: &BlockParams,
    s: &Arc<ScanIndexSet>,
    opts: &Ss2dOptions,
    cache: &BlockCache,
    g_out: &[f64],
) -> (Vec<f64>, BlockParams) {
    let c = bp.channels();
    let hw = s.pixels();
    let b = g_out.len() / (c * hw);
    let mut grads = bp.zeros_like();

    let g_hidden = bp.ffn.down.backward(&cache.hidden, g_out, b, hw, &mut grads.ffn.down);
    let g_pre: Vec<f64> = g_hidden
        .iter()
        .zip(&cache.hidden_pre)
        .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
        .collect();
    let g_n2 = bp.ffn.up.backward(&cache.n2, &g_pre, b, hw, &mut grads.ffn.up);
    let g_x1_ln = layer_norm_backward(&g_n2, b, c, hw, &bp.norm2, &cache.ln2, &mut grads.norm2);
    let g_x1: Vec<f64> = g_out.iter().zip(&g_x1_ln).map(|(a, b)| a + b).collect();

    let (g_n1, ss2d_grads) = o_ss2d_backward(&bp.ssm, &bp.attn, s, opts, &cache.ss2d, &g_x1);
    grads.ssm = ss2d_grads.ssm;
    grads.attn = ss2d_grads.attn;
    let g_x_ln = layer_norm_backward(&g_n1, b, c, hw, &bp.norm1, &cache.ln1, &mut grads.norm1);
    let gx = g_x1.iter().zip(&g_x_ln).map(|(a, b)| a + b).collect();
    (gx, grads)
}
