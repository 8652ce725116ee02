//! Analytic gradients against central finite differences.

use std::sync::Arc;

use crate::analysis::central_difference;
use crate::error::Result;
use crate::omodule::block::{o_vss_block_backward, o_vss_block_forward, BlockParams};
use crate::omodule::encoder::Encoder;
use crate::omodule::ss2d::Ss2dOptions;
use crate::rng::Rng;
use crate::scanlines::ScanIndexSet;
use crate::tensor::{FeatureMap, Tensor};

/// Norms below this are treated as zero when forming relative errors.
pub const NORM_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// `|a - n| / max(|a|, |n|, NORM_FLOOR)` in the Euclidean norm.
    pub rel_err: f64,
}

impl GroupCheck {
    pub fn new(name: impl Into<String>, analytic: &[f64], numeric: &[f64]) -> Self {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: f64 = analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let (an, nn) = (norm(analytic), norm(numeric));
        Self {
            name: name.into(),
            analytic_norm: an,
            numeric_norm: nn,
            rel_err: diff / an.max(nn).max(NORM_FLOOR),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks every parameter tensor of an O-VSS block and its input under the
/// scalar loss `<r, block(x)>` with seeded random `r`.
pub fn block_gradcheck(
    bp: &BlockParams,
    s: &Arc<ScanIndexSet>,
    opts: &Ss2dOptions,
    x: &FeatureMap,
    seed: u64,
    step: f64,
) -> Result<Vec<GroupCheck>> {
    let (b, c, h, w) = (x.batch(), x.channels(), x.height(), x.width());
    let r = Rng::new(seed).normal_vec(x.data().len(), 1.0);
    let (_, cache) = o_vss_block_forward(x, bp, s, opts)?;
    let (gx, grads) = o_vss_block_backward(bp, s, opts, &cache, &r);

    let loss = |p: &BlockParams, xs: &[f64]| -> Result<f64> {
        let fm = FeatureMap::from_vec(b, c, h, w, xs.to_vec())?;
        Ok(dot(&r, o_vss_block_forward(&fm, p, s, opts)?.0.data()))
    };

    let mut out = Vec::new();
    let analytic: Vec<(String, Tensor)> = grads
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    for (gi, (name, g)) in analytic.iter().enumerate() {
        let mut work = bp.clone();
        let base = work.named_tensors()[gi].1.data().to_vec();
        let numeric = central_difference(
            |vals| {
                work.named_tensors_mut()[gi].1.data_mut().copy_from_slice(vals);
                loss(&work, x.data())
            },
            &base,
            step,
        )?;
        out.push(GroupCheck::new(name.clone(), g.data(), &numeric));
    }
    let numeric = central_difference(|xs| loss(bp, xs), x.data(), step)?;
    out.push(GroupCheck::new("input", &gx, &numeric));
    Ok(out)
}

/// Same check for an encoder under the loss `<r, logits>`.
pub fn encoder_gradcheck(model: &Encoder, x: &FeatureMap, seed: u64, step: f64) -> Result<Vec<GroupCheck>> {
    let (logits, cache) = model.forward(x)?;
    let r = Rng::new(seed).normal_vec(logits.len(), 1.0);
    let (gx, grads) = model.backward(cache, &r);
    let loss = |m: &Encoder, xs: &[f64]| -> Result<f64> {
        let fm = FeatureMap::from_vec(x.batch(), x.channels(), x.height(), x.width(), xs.to_vec())?;
        Ok(dot(&r, m.logits(&fm)?.data()))
    };
    let mut out = Vec::new();
    let analytic: Vec<(String, Tensor)> = grads
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    for (gi, (name, g)) in analytic.iter().enumerate() {
        let mut work = model.clone();
        let base = work.named_tensors()[gi].1.data().to_vec();
        let numeric = central_difference(
            |vals| {
                work.named_tensors_mut()[gi].1.data_mut().copy_from_slice(vals);
                loss(&work, x.data())
            },
            &base,
            step,
        )?;
        out.push(GroupCheck::new(name.clone(), g.data(), &numeric));
    }
    let numeric = central_difference(|xs| loss(model, xs), x.data(), step)?;
    out.push(GroupCheck::new("input", &gx, &numeric));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::omodule::encoder::EncoderConfig;
    use crate::omodule::ss2d::WeightMode;
    use crate::scanlines::{build_index_set, Direction};
    use crate::sscan::{DiscretizeOptions, GateMode, Normalization, ZohRule};

    fn perturbed_block(c: usize, n: usize, groups: usize, rng: &mut Rng) -> BlockParams {
        let mut bp = BlockParams::init(c, n, groups, GateMode::AffineSigmoid, rng);
        // move every parameter off its initial symmetric value
        for (_, t) in bp.named_tensors_mut() {
            for v in t.data_mut() {
                *v += 0.1 * rng.normal();
            }
        }
        bp
    }

    fn assert_all(checks: &[GroupCheck], tol: f64) {
        for g in checks {
            assert!(g.rel_err <= tol, "{}: rel err {:e}", g.name, g.rel_err);
        }
    }

    #[test]
    fn block_gradients_shared_params() {
        let mut rng = Rng::new(21);
        let bp = perturbed_block(3, 2, 1, &mut rng);
        let s = Arc::new(build_index_set(3, 4));
        let x = FeatureMap::from_vec(2, 3, 3, 4, rng.normal_vec(72, 1.0)).unwrap();
        let checks = block_gradcheck(&bp, &s, &Ss2dOptions::default(), &x, 5, 1e-6).unwrap();
        assert_eq!(checks.len(), bp.named_tensors().len() + 1);
        assert_all(&checks, 1e-6);
    }

    #[test]
    fn block_gradients_per_direction_exact_zoh() {
        let mut rng = Rng::new(22);
        let bp = perturbed_block(2, 3, 4, &mut rng);
        let s = Arc::new(ScanIndexSet::build(4, 3, &Direction::subset(4).unwrap()));
        let opts = Ss2dOptions {
            weights: WeightMode::Learned,
            discretize: DiscretizeOptions {
                normalization: Normalization::Discrete { directions: 4 },
                zoh: ZohRule::Exact,
            },
        };
        let x = FeatureMap::from_vec(1, 2, 4, 3, rng.normal_vec(24, 1.0)).unwrap();
        assert_all(&block_gradcheck(&bp, &s, &opts, &x, 6, 1e-6).unwrap(), 1e-6);
    }

    #[test]
    fn block_gradients_uniform_weights() {
        let mut rng = Rng::new(23);
        let bp = perturbed_block(2, 2, 1, &mut rng);
        let s = Arc::new(build_index_set(3, 3));
        let opts = Ss2dOptions {
            weights: WeightMode::Uniform,
            ..Default::default()
        };
        let x = FeatureMap::from_vec(1, 2, 3, 3, rng.normal_vec(18, 1.0)).unwrap();
        let checks = block_gradcheck(&bp, &s, &opts, &x, 7, 1e-6).unwrap();
        assert_all(&checks, 1e-6);
        // scorer is bypassed, so its gradients vanish
        assert!(checks.iter().filter(|g| g.name.starts_with("attn.")).all(|g| g.analytic_norm == 0.0));
    }

    #[test]
    fn encoder_gradients_two_stages() {
        let m = Encoder::new(EncoderConfig {
            in_channels: 2,
            stages: vec![(1, 3), (1, 4)],
            d_state: 2,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let mut rng = Rng::new(4);
        let x = FeatureMap::from_vec(2, 2, 4, 4, rng.normal_vec(64, 1.0)).unwrap();
        assert_all(&encoder_gradcheck(&m, &x, 8, 1e-6).unwrap(), 1e-6);
    }

    #[test]
    fn relative_error_uses_the_floor() {
        let g = GroupCheck::new("z", &[0.0, 0.0], &[1e-9, 0.0]);
        assert!((g.rel_err - 1e-6).abs() < 1e-18);
    }
}
