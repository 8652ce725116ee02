//! Effective-operator analysis: impulse-probed operators, support patterns,
//! effective receptive fields and an isotropy score.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::omodule::attention::AttentionParams;
use crate::omodule::block::{o_vss_block_backward, o_vss_block_forward, BlockParams};
use crate::omodule::encoder::Encoder;
use crate::omodule::ss2d::{o_ss2d, o_ss2d_backward, o_ss2d_forward, Ss2dOptions};
use crate::rng::Rng;
use crate::scanlines::{Direction, ScanIndexSet};
use crate::sscan::SsmParams;
use crate::tensor::{FeatureMap, Tensor};

/// Tolerance of the superposition spot-check run before materialization.
pub const LINEARITY_TOLERANCE: f64 = 1e-10;
/// Support threshold relative to `max |M|`.
pub const RELATIVE_SUPPORT_THRESHOLD: f64 = 1e-9;

/// A map from `(C, H, W)` feature maps to `(C', H, W)` feature maps with a
/// vector-Jacobian product.
pub trait Probe {
    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap>;
    /// `d <gy, forward(x)> / d x`.
    fn vjp(&self, x: &FeatureMap, gy: &[f64]) -> Result<Vec<f64>>;
}

/// Passes the input through unchanged.
pub struct Identity;

impl Probe for Identity {
    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        Ok(x.clone())
    }

    fn vjp(&self, _x: &FeatureMap, gy: &[f64]) -> Result<Vec<f64>> {
        Ok(gy.to_vec())
    }
}

/// A single O-SS2D operator.
pub struct Ss2dProbe {
    pub ssm: SsmParams,
    pub attn: AttentionParams,
    pub index: Arc<ScanIndexSet>,
    pub opts: Ss2dOptions,
}

impl Probe for Ss2dProbe {
    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        o_ss2d(x, &self.ssm, &self.attn, &self.index, &self.opts)
    }

    fn vjp(&self, x: &FeatureMap, gy: &[f64]) -> Result<Vec<f64>> {
        let (_, cache) = o_ss2d_forward(x, &self.ssm, &self.attn, &self.index, &self.opts)?;
        Ok(o_ss2d_backward(&self.ssm, &self.attn, &self.index, &self.opts, &cache, gy).0)
    }
}

/// A full O-VSS block.
pub struct BlockProbe {
    pub params: BlockParams,
    pub index: Arc<ScanIndexSet>,
    pub opts: Ss2dOptions,
}

impl Probe for BlockProbe {
    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        o_vss_block_forward(x, &self.params, &self.index, &self.opts).map(|(y, _)| y)
    }

    fn vjp(&self, x: &FeatureMap, gy: &[f64]) -> Result<Vec<f64>> {
        let (_, cache) = o_vss_block_forward(x, &self.params, &self.index, &self.opts)?;
        Ok(o_vss_block_backward(&self.params, &self.index, &self.opts, &cache, gy).0)
    }
}

/// The spatial feature map of an encoder, before pooling.
pub struct EncoderProbe<'a>(pub &'a Encoder);

impl Probe for EncoderProbe<'_> {
    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.0.features(x).map(|(y, _)| y)
    }

    fn vjp(&self, x: &FeatureMap, gy: &[f64]) -> Result<Vec<f64>> {
        let (_, cache) = self.0.features(x)?;
        let mut grads = self.0.zeros_like();
        Ok(self.0.backward_features(cache, gy.to_vec(), &mut grads))
    }
}

/// Per-channel effective linear operator `M[c, q, p]`: the response at pixel
/// `q` to a unit impulse at pixel `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveOperator {
    m: Tensor,
    height: usize,
    width: usize,
}

impl EffectiveOperator {
    pub fn from_tensor(m: Tensor, height: usize, width: usize) -> Result<Self> {
        let hw = height * width;
        if m.rank() != 3 || m.shape()[1..] != [hw, hw] {
            return Err(Error::Shape(format!("operator must be (C, {hw}, {hw}), got {:?}", m.shape())));
        }
        Ok(Self { m, height, width })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.m
    }

    pub fn channels(&self) -> usize {
        self.m.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn get(&self, c: usize, q: usize, p: usize) -> f64 {
        let hw = self.pixels();
        self.m.data()[(c * hw + q) * hw + p]
    }

    /// The `(HW, HW)` matrix of one channel.
    pub fn channel(&self, c: usize) -> Tensor {
        let n = self.pixels() * self.pixels();
        Tensor::new(vec![self.pixels(), self.pixels()], self.m.data()[c * n..(c + 1) * n].to_vec()).unwrap()
    }

    /// `RELATIVE_SUPPORT_THRESHOLD * max |M|` over all channels.
    pub fn default_threshold(&self) -> f64 {
        RELATIVE_SUPPORT_THRESHOLD * self.m.max_abs()
    }
}

/// Checks `f(x + z) = f(x) + f(z)` on seeded random inputs, relative to the
/// output scale.
pub fn superposition_residual(model: &dyn Probe, channels: usize, h: usize, w: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let x = FeatureMap::from_vec(1, channels, h, w, rng.normal_vec(channels * h * w, 1.0))?;
    let z = FeatureMap::from_vec(1, channels, h, w, rng.normal_vec(channels * h * w, 1.0))?;
    let xz = FeatureMap::from_vec(
        1,
        channels,
        h,
        w,
        x.data().iter().zip(z.data()).map(|(a, b)| a + b).collect(),
    )?;
    let (fx, fz, fxz) = (model.forward(&x)?, model.forward(&z)?, model.forward(&xz)?);
    let scale = fx.tensor().max_abs().max(fz.tensor().max_abs()).max(1.0);
    let residual = fxz
        .data()
        .iter()
        .zip(fx.data())
        .zip(fz.data())
        .fold(0.0f64, |m, ((s, a), b)| m.max((s - a - b).abs()));
    Ok(residual / scale)
}

/// Probes `model` with one impulse per `(channel, pixel)` after a
/// superposition check. The model must not mix channels.
pub fn materialize_operator(model: &dyn Probe, channels: usize, h: usize, w: usize) -> Result<EffectiveOperator> {
    let residual = superposition_residual(model, channels, h, w, 0x5eed)?;
    if residual > LINEARITY_TOLERANCE {
        return Err(Error::NotLinear {
            residual,
            tolerance: LINEARITY_TOLERANCE,
        });
    }
    let hw = h * w;
    // one batch entry per (channel, pixel) impulse
    let batch = channels * hw;
    let mut probe = vec![0.0; batch * channels * hw];
    for c in 0..channels {
        for p in 0..hw {
            let bi = c * hw + p;
            probe[(bi * channels + c) * hw + p] = 1.0;
        }
    }
    let response = model.forward(&FeatureMap::from_vec(batch, channels, h, w, probe)?)?;
    if response.channels() != channels {
        return Err(Error::Shape(format!(
            "operator probing needs a channel-preserving model, got {} -> {}",
            channels,
            response.channels()
        )));
    }
    let r = response.data();
    let mut m = vec![0.0; channels * hw * hw];
    for c in 0..channels {
        for p in 0..hw {
            let bi = c * hw + p;
            for c2 in 0..channels {
                let col = &r[(bi * channels + c2) * hw..(bi * channels + c2 + 1) * hw];
                if c2 == c {
                    for (q, &v) in col.iter().enumerate() {
                        m[(c * hw + q) * hw + p] = v;
                    }
                } else if col.iter().any(|&v| v != 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "model mixes channel {c} into channel {c2}"
                    )));
                }
            }
        }
    }
    EffectiveOperator::from_tensor(Tensor::new(vec![channels, hw, hw], m)?, h, w)
}

/// Boolean `(HW, HW)` matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPattern {
    size: usize,
    data: Vec<bool>,
}

impl SupportPattern {
    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(size * size);
        for q in 0..size {
            for p in 0..size {
                data.push(f(q, p));
            }
        }
        Self { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, q: usize, p: usize) -> bool {
        self.data[q * self.size + p]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Number of true entries in column `p`.
    pub fn column_count(&self, p: usize) -> usize {
        (0..self.size).filter(|&q| self.get(q, p)).count()
    }

    pub fn is_subset_of(&self, other: &SupportPattern) -> bool {
        self.size == other.size && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|q| (0..q).all(|p| self.get(q, p) == self.get(p, q)))
    }

    /// `1.0` for true, `0.0` for false.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.size, self.size],
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap()
    }

    /// Positions where the two patterns differ.
    pub fn mismatches(&self, other: &SupportPattern) -> Vec<(usize, usize)> {
        (0..self.size * self.size)
            .filter(|&i| self.data[i] != other.data[i])
            .map(|i| (i / self.size, i % self.size))
            .collect()
    }
}

fn same_line(d: Direction, q: (usize, usize), p: (usize, usize)) -> bool {
    let (qi, qj) = (q.0 as isize, q.1 as isize);
    let (pi, pj) = (p.0 as isize, p.1 as isize);
    match d {
        Direction::RowFwd | Direction::RowBwd => qi == pi,
        Direction::ColDown | Direction::ColUp => qj == pj,
        Direction::DiagDR | Direction::DiagUL => qi - qj == pi - pj,
        Direction::DiagDL | Direction::DiagUR => qi + qj == pi + pj,
    }
}

/// Pairs of pixels sharing a line of any of `directions`' families.
pub fn line_membership(h: usize, w: usize, directions: &[Direction]) -> SupportPattern {
    SupportPattern::from_fn(h * w, |q, p| {
        let (qc, pc) = ((q / w, q % w), (p / w, p % w));
        directions.iter().any(|&d| same_line(d, qc, pc))
    })
}

/// Pixels sharing a row, a column or a diagonal (either family).
pub fn expected_support(h: usize, w: usize) -> SupportPattern {
    line_membership(h, w, &Direction::ALL)
}

/// `|M[c, q, p]| > tau`.
pub fn support_pattern(op: &EffectiveOperator, channel: usize, tau: f64) -> SupportPattern {
    SupportPattern::from_fn(op.pixels(), |q, p| op.get(channel, q, p).abs() > tau)
}

/// Non-negative sensitivity map of one output location.
#[derive(Debug, Clone, PartialEq)]
pub struct ErfMap {
    pub values: Tensor,
    pub center: (usize, usize),
}

impl ErfMap {
    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    /// Pixels with a value above `tau`.
    pub fn support(&self, tau: f64) -> Vec<bool> {
        self.values.data().iter().map(|&v| v > tau).collect()
    }
}

fn check_center(x: &FeatureMap, center: (usize, usize)) -> Result<()> {
    if x.batch() != 1 {
        return Err(Error::InvalidArgument("ERF needs a single-sample input".into()));
    }
    if center.0 >= x.height() || center.1 >= x.width() {
        return Err(Error::InvalidArgument(format!(
            "center {center:?} outside a {}x{} grid",
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

fn reduce_channels(g: &[f64], channels: usize, h: usize, w: usize) -> Tensor {
    let hw = h * w;
    let mut v = vec![0.0; hw];
    for c in 0..channels {
        v.iter_mut().zip(&g[c * hw..(c + 1) * hw]).for_each(|(a, b)| *a += b.abs());
    }
    Tensor::new(vec![h, w], v).unwrap()
}

/// `|d (sum_c out[c, i, j]) / d x[., i', j']|`, summed over input channels,
/// from the analytic reverse pass.
pub fn erf(model: &dyn Probe, x: &FeatureMap, center: (usize, usize)) -> Result<ErfMap> {
    check_center(x, center)?;
    let y = model.forward(x)?;
    let (h, w) = (y.height(), y.width());
    let mut gy = vec![0.0; y.data().len()];
    for c in 0..y.channels() {
        gy[(c * h + center.0) * w + center.1] = 1.0;
    }
    let gx = model.vjp(x, &gy)?;
    Ok(ErfMap {
        values: reduce_channels(&gx, x.channels(), x.height(), x.width()),
        center,
    })
}

/// Same quantity as [`erf`] by central differences.
pub fn erf_finite_difference(model: &dyn Probe, x: &FeatureMap, center: (usize, usize), step: f64) -> Result<ErfMap> {
    check_center(x, center)?;
    let (ci, h, w) = (x.channels(), x.height(), x.width());
    let readout = |xs: &[f64]| -> Result<f64> {
        let y = model.forward(&FeatureMap::from_vec(1, ci, h, w, xs.to_vec())?)?;
        Ok((0..y.channels()).map(|c| y.at(0, c, center.0, center.1)).sum())
    };
    let g = central_difference(|xs| readout(xs), x.data(), step)?;
    Ok(ErfMap {
        values: reduce_channels(&g, ci, h, w),
        center,
    })
}

/// Central finite-difference gradient of a scalar function.
pub fn central_difference<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut xs = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + step;
        let plus = f(&xs)?;
        xs[i] = orig - step;
        let minus = f(&xs)?;
        xs[i] = orig;
        g.push((plus - minus) / (2.0 * step));
    }
    Ok(g)
}

/// Normalized ERF mass on each of the eight spokes from the center, spoke
/// `k` pointing at angle `k * 45` degrees counter-clockwise from the
/// positive column axis. Off-spoke pixels go to the nearest spoke by angle,
/// exact ties split equally; the center pixel is excluded.
pub fn spoke_masses(e: &ErfMap) -> Result<[f64; 8]> {
    let (ci, cj) = (e.center.0 as isize, e.center.1 as isize);
    let w = e.width();
    let mut mass = [0.0; 8];
    for (idx, &v) in e.values.data().iter().enumerate() {
        let (i, j) = ((idx / w) as isize, (idx % w) as isize);
        if (i, j) == (ci, cj) || v == 0.0 {
            continue;
        }
        // rows grow downward, so up is +y
        let angle = ((ci - i) as f64).atan2((j - cj) as f64).rem_euclid(2.0 * std::f64::consts::PI);
        let t = angle / FRAC_PI_4;
        let lo = t.floor();
        let frac = t - lo;
        if (frac - 0.5).abs() < 1e-12 {
            mass[lo as usize % 8] += 0.5 * v;
            mass[(lo as usize + 1) % 8] += 0.5 * v;
        } else {
            mass[t.round() as usize % 8] += v;
        }
    }
    let total: f64 = mass.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(mass.map(|m| m / total))
}

/// `1 - max_k |m_k - 1/8| * 8/7`: one for equal spoke masses, zero when all
/// mass sits on a single spoke.
pub fn isotropy_score(e: &ErfMap) -> Result<f64> {
    let m = spoke_masses(e)?;
    let dev = m.iter().fold(0.0f64, |a, &v| a.max((v - 0.125).abs()));
    Ok((1.0 - dev * 8.0 / 7.0).clamp(0.0, 1.0))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(m: &Tensor) -> Result<Vec<f64>> {
    if m.rank() != 2 || m.shape()[0] != m.shape()[1] {
        return Err(Error::Shape(format!("expected a square matrix, got {:?}", m.shape())));
    }
    let n = m.shape()[0];
    let mut a = m.data().to_vec();
    let scale = m.max_abs();
    for i in 0..n {
        for j in 0..i {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument("matrix is not symmetric".into()));
            }
        }
    }
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s
    };
    let total: f64 = a.iter().map(|v| v * v).sum();
    for _ in 0..100 {
        if off(&a) <= 1e-30 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i * n + i]).collect())
}

/// Largest eigenvalue magnitude of a symmetric matrix.
pub fn spectral_radius(m: &Tensor) -> Result<f64> {
    Ok(symmetric_eigenvalues(m)?.iter().fold(0.0f64, |r, v| r.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanlines::build_index_set;
    use crate::sscan::GateMode;
    use crate::WeightMode;

    fn uniform_probe(h: usize, w: usize, channels: usize, seed: u64) -> Ss2dProbe {
        let mut rng = Rng::new(seed);
        Ss2dProbe {
            ssm: SsmParams::init(channels, 3, 1, GateMode::ConstantOne, &mut rng),
            attn: AttentionParams::init(channels, &mut rng),
            index: Arc::new(build_index_set(h, w)),
            opts: Ss2dOptions {
                weights: WeightMode::Uniform,
                ..Default::default()
            },
        }
    }

    #[test]
    fn identity_operator() {
        let op = materialize_operator(&Identity, 2, 2, 3).unwrap();
        for c in 0..2 {
            for q in 0..6 {
                for p in 0..6 {
                    assert_eq!(op.get(c, q, p), if q == p { 1.0 } else { 0.0 });
                }
            }
        }
        let pat = support_pattern(&op, 0, 0.5);
        assert_eq!(pat, SupportPattern::from_fn(6, |q, p| q == p));
        assert_eq!(support_pattern(&op, 0, 2.0).count(), 0);
    }

    #[test]
    fn row_forward_operator_is_semiseparable() {
        let ssm = SsmParams::from_values(vec![0.5f64.ln()], vec![1.0], vec![1.0], vec![0.0], 1, 1).unwrap();
        let mut rng = Rng::new(0);
        let probe = Ss2dProbe {
            ssm,
            attn: AttentionParams::init(1, &mut rng),
            index: Arc::new(build_index_set(1, 3)),
            opts: Ss2dOptions {
                weights: WeightMode::OneHot(Direction::RowFwd),
                discretize: crate::DiscretizeOptions {
                    normalization: crate::Normalization::None,
                    ..Default::default()
                },
            },
        };
        let op = materialize_operator(&probe, 1, 1, 3).unwrap();
        let expected = [[1.0, 0.0, 0.0], [0.5, 1.0, 0.0], [0.25, 0.5, 1.0]];
        for (q, row) in expected.iter().enumerate() {
            for (p, &e) in row.iter().enumerate() {
                assert!((op.get(0, q, p) - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn learned_weights_fail_the_linearity_gate() {
        let mut probe = uniform_probe(3, 3, 2, 1);
        probe.opts.weights = WeightMode::Learned;
        assert!(matches!(
            materialize_operator(&probe, 2, 3, 3),
            Err(Error::NotLinear { .. })
        ));
    }

    #[test]
    fn expected_support_examples() {
        let s = expected_support(3, 3);
        assert_eq!(s.column_count(4), 9);
        let col: Vec<usize> = (0..9).filter(|&q| s.get(q, 1)).collect();
        assert_eq!(col, vec![0, 1, 2, 3, 4, 5, 7]);
        assert_eq!(expected_support(1, 1), SupportPattern::from_fn(1, |_, _| true));
        assert!(s.is_symmetric());
    }

    #[test]
    fn uniform_operator_support_on_3x3() {
        let probe = uniform_probe(3, 3, 1, 2);
        let op = materialize_operator(&probe, 1, 3, 3).unwrap();
        let pat = support_pattern(&op, 0, op.default_threshold());
        assert_eq!(pat.column_count(4), 9);
        assert_eq!(pat, expected_support(3, 3));
    }

    #[test]
    fn erf_identity_is_impulse() {
        let x = FeatureMap::zeros(1, 2, 5, 5);
        let e = erf(&Identity, &x, (2, 3)).unwrap();
        for (idx, &v) in e.values.data().iter().enumerate() {
            assert_eq!(v, if idx == 2 * 5 + 3 { 2.0 } else { 0.0 });
        }
        assert!(erf(&Identity, &x, (5, 0)).is_err());
    }

    #[test]
    fn erf_matches_operator_row() {
        let probe = uniform_probe(5, 5, 2, 3);
        let op = materialize_operator(&probe, 2, 5, 5).unwrap();
        let x = FeatureMap::zeros(1, 2, 5, 5);
        let e = erf(&probe, &x, (2, 2)).unwrap();
        let center = 2 * 5 + 2;
        for p in 0..25 {
            let m: f64 = (0..2).map(|c| op.get(c, center, p).abs()).sum();
            assert!((e.values.data()[p] - m).abs() < 1e-10);
        }
    }

    #[test]
    fn erf_backward_matches_finite_differences() {
        let mut rng = Rng::new(9);
        let probe = BlockProbe {
            params: BlockParams::init(3, 2, 1, GateMode::AffineSigmoid, &mut rng),
            index: Arc::new(build_index_set(5, 5)),
            opts: Ss2dOptions::default(),
        };
        let x = FeatureMap::from_vec(1, 3, 5, 5, rng.normal_vec(75, 1.0)).unwrap();
        let a = erf(&probe, &x, (1, 3)).unwrap();
        let n = erf_finite_difference(&probe, &x, (1, 3), 1e-6).unwrap();
        for (u, v) in a.values.data().iter().zip(n.values.data()) {
            assert!((u - v).abs() <= 1e-6 * u.abs().max(1.0), "{u} vs {v}");
        }
    }

    fn star(n: usize, spokes: &[usize]) -> ErfMap {
        let c = n / 2;
        let mut v = Tensor::zeros(&[n, n]);
        let steps: [(isize, isize); 8] = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)];
        for &k in spokes {
            for r in 1..=c as isize {
                let (i, j) = (c as isize + r * steps[k].0, c as isize + r * steps[k].1);
                v.set(&[i as usize, j as usize], 1.0);
            }
        }
        v.set(&[c, c], 5.0);
        ErfMap { values: v, center: (c, c) }
    }

    #[test]
    fn isotropy_extremes() {
        assert!((isotropy_score(&star(7, &[0, 1, 2, 3, 4, 5, 6, 7])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(isotropy_score(&star(7, &[3])).unwrap(), 0.0);
        let m = spoke_masses(&star(5, &[0, 2])).unwrap();
        assert_eq!(m, [0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut only_center = Tensor::zeros(&[3, 3]);
        only_center.set(&[1, 1], 1.0);
        assert!(matches!(
            isotropy_score(&ErfMap {
                values: only_center,
                center: (1, 1)
            }),
            Err(Error::ZeroMass)
        ));
    }

    #[test]
    fn off_spoke_mass_goes_to_nearest_spoke() {
        // (i, j) = (c - 1, c + 2): angle atan(1/2) ~ 26.6 degrees -> spoke 1
        let mut v = Tensor::zeros(&[5, 5]);
        v.set(&[1, 4], 2.0);
        let m = spoke_masses(&ErfMap { values: v, center: (2, 2) }).unwrap();
        assert_eq!(m[1], 1.0);
    }

    #[test]
    fn spectral_radius_small_cases() {
        let m = Tensor::new(vec![2, 2], vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((spectral_radius(&m).unwrap() - 3.0).abs() < 1e-12);
        let m = Tensor::new(vec![2, 2], vec![-4.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((spectral_radius(&m).unwrap() - 4.0).abs() < 1e-12);
        let m = Tensor::new(vec![2, 2], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(spectral_radius(&m).is_err());
    }
}
