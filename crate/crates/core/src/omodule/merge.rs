//! Gather along scan-lines, inverse placement, and the weighted merge.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scanlines::{Direction, ScanIndexSet};
use crate::tensor::{FeatureMap, Tensor};

/// Feature values gathered along every scan-line: `(B, C, D, n_max, L_max)`,
/// zero at padded positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalSequences {
    data: Tensor,
    index: Arc<ScanIndexSet>,
}

impl DirectionalSequences {
    pub fn new(data: Tensor, index: Arc<ScanIndexSet>) -> Result<Self> {
        let d = index.num_directions();
        if data.rank() != 5 || data.shape()[2..] != [d, index.n_max(), index.l_max()] {
            return Err(Error::Shape(format!(
                "directional sequences must be (B, C, {d}, {}, {}), got {:?}",
                index.n_max(),
                index.l_max(),
                data.shape()
            )));
        }
        Ok(Self { data, index })
    }

    pub fn batch(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn index(&self) -> &Arc<ScanIndexSet> {
        &self.index
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn data(&self) -> &[f64] {
        self.data.data()
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.data.data_mut()
    }

    /// Broadcast of the index-set mask to the full sequence shape.
    pub fn mask(&self) -> Vec<bool> {
        let plane = self.index.mask();
        let mut out = Vec::with_capacity(self.data.len());
        for _ in 0..self.batch() * self.channels() {
            out.extend_from_slice(plane);
        }
        out
    }
}

/// Per-pixel distribution over directions, `(B, D, H*W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionWeights {
    data: Tensor,
}

impl DirectionWeights {
    /// Validates non-negativity and the per-pixel unit sum (to 1e-12).
    pub fn new(data: Tensor) -> Result<Self> {
        if data.rank() != 3 {
            return Err(Error::Shape(format!(
                "direction weights must be (B, D, HW), got {:?}",
                data.shape()
            )));
        }
        let (b, d, hw) = (data.shape()[0], data.shape()[1], data.shape()[2]);
        for bi in 0..b {
            for p in 0..hw {
                let mut sum = 0.0;
                for k in 0..d {
                    let w = data.data()[(bi * d + k) * hw + p];
                    if w.is_nan() || w < 0.0 {
                        return Err(Error::InvalidArgument(format!("negative or NaN weight {w}")));
                    }
                    sum += w;
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "weights at (b={bi}, p={p}) sum to {sum}"
                    )));
                }
            }
        }
        Ok(Self { data })
    }

    pub fn uniform(batch: usize, directions: usize, pixels: usize) -> Self {
        Self {
            data: Tensor::full(&[batch, directions, pixels], 1.0 / directions as f64),
        }
    }

    pub fn one_hot(batch: usize, directions: usize, pixels: usize, k: usize) -> Self {
        Self::subset(batch, directions, pixels, &[k])
    }

    /// Uniform over the listed direction slots, zero elsewhere.
    pub fn subset(batch: usize, directions: usize, pixels: usize, slots: &[usize]) -> Self {
        assert!(!slots.is_empty() && slots.iter().all(|&k| k < directions));
        let mut data = Tensor::zeros(&[batch, directions, pixels]);
        let w = 1.0 / slots.len() as f64;
        for b in 0..batch {
            for &k in slots {
                data.data_mut()[(b * directions + k) * pixels..(b * directions + k + 1) * pixels].fill(w);
            }
        }
        Self { data }
    }

    /// Softmax over the direction axis of `(B, D, HW)` scores.
    pub fn softmax(scores: &Tensor) -> Self {
        let (b, d, hw) = (scores.shape()[0], scores.shape()[1], scores.shape()[2]);
        let mut data = Tensor::zeros(scores.shape());
        for bi in 0..b {
            for p in 0..hw {
                let at = |k: usize| (bi * d + k) * hw + p;
                let max = (0..d).map(|k| scores.data()[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for k in 0..d {
                    let e = (scores.data()[at(k)] - max).exp();
                    data.data_mut()[at(k)] = e;
                    sum += e;
                }
                for k in 0..d {
                    data.data_mut()[at(k)] /= sum;
                }
            }
        }
        Self { data }
    }

    /// Repeats a single-sample distribution `batch` times.
    pub fn broadcast(&self, batch: usize) -> Self {
        assert_eq!(self.batch(), 1, "only a single-sample distribution can be broadcast");
        let mut data = Vec::with_capacity(batch * self.data.len());
        for _ in 0..batch {
            data.extend_from_slice(self.data.data());
        }
        Self {
            data: Tensor::new(vec![batch, self.directions(), self.pixels()], data).unwrap(),
        }
    }

    pub fn batch(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn directions(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn pixels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn data(&self) -> &[f64] {
        self.data.data()
    }

    /// Largest deviation from the uniform distribution.
    pub fn max_deviation_from_uniform(&self) -> f64 {
        let u = 1.0 / self.directions() as f64;
        self.data().iter().fold(0.0, |m, w| m.max((w - u).abs()))
    }
}

fn check_grid(x: &FeatureMap, s: &ScanIndexSet) -> Result<()> {
    if (x.height(), x.width()) != (s.height(), s.width()) {
        return Err(Error::Shape(format!(
            "index set built for {}x{}, feature map is {}x{}",
            s.height(),
            s.width(),
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

/// Gathers `x` along all scan-lines of `s`.
pub fn o_scan(x: &FeatureMap, s: &Arc<ScanIndexSet>) -> Result<DirectionalSequences> {
    check_grid(x, s)?;
    let (b, c) = (x.batch(), x.channels());
    let data = gather(x.data(), b * c, s).reshape(vec![b, c, s.num_directions(), s.n_max(), s.l_max()])?;
    Ok(DirectionalSequences { data, index: s.clone() })
}

/// `src` is `(rows, HW)`; returns `(rows, D, n_max, L_max)`.
pub(crate) fn gather(src: &[f64], rows: usize, s: &ScanIndexSet) -> Tensor {
    let hw = s.pixels();
    let plane = s.idx();
    let per_row = plane.len();
    let mut data = vec![0.0; rows * per_row];
    for r in 0..rows {
        let x_row = &src[r * hw..(r + 1) * hw];
        let dst = &mut data[r * per_row..(r + 1) * per_row];
        for (d, &i) in dst.iter_mut().zip(plane) {
            if i >= 0 {
                *d = x_row[i as usize];
            }
        }
    }
    Tensor::new(
        vec![rows, s.num_directions(), s.n_max(), s.l_max()],
        data,
    )
    .unwrap()
}

/// Places every `(direction, line, step)` value at its pixel: returns
/// `(rows, D, HW)` from `(rows, D, n_max, L_max)`.
pub(crate) fn place(seqs: &[f64], rows: usize, s: &ScanIndexSet) -> Vec<f64> {
    let hw = s.pixels();
    let d = s.num_directions();
    let per_dir = s.n_max() * s.l_max();
    let plane = s.idx();
    let mut out = vec![0.0; rows * d * hw];
    for r in 0..rows {
        for k in 0..d {
            let src = &seqs[(r * d + k) * per_dir..(r * d + k + 1) * per_dir];
            let dst = &mut out[(r * d + k) * hw..(r * d + k + 1) * hw];
            for (&v, &i) in src.iter().zip(&plane[k * per_dir..(k + 1) * per_dir]) {
                if i >= 0 {
                    dst[i as usize] = v;
                }
            }
        }
    }
    out
}

/// Inverse placement per direction: `(B, C, D, H*W)`.
pub fn stack_by_pixel(seqs: &DirectionalSequences) -> Tensor {
    let (b, c) = (seqs.batch(), seqs.channels());
    let s = &seqs.index;
    Tensor::new(
        vec![b, c, s.num_directions(), s.pixels()],
        place(seqs.data(), b * c, s),
    )
    .unwrap()
}

/// Re-gathers a pixel-stacked `(B, C, D, HW)` tensor into scan-line layout,
/// direction `k` reading only from slot `k`.
pub fn unstack(stacked: &Tensor, s: &Arc<ScanIndexSet>) -> Result<DirectionalSequences> {
    let d = s.num_directions();
    if stacked.rank() != 4 || stacked.shape()[2..] != [d, s.pixels()] {
        return Err(Error::Shape(format!(
            "stacked tensor must be (B, C, {d}, {}), got {:?}",
            s.pixels(),
            stacked.shape()
        )));
    }
    let data = unplace(stacked.data(), stacked.shape()[0] * stacked.shape()[1], s);
    let shape = vec![stacked.shape()[0], stacked.shape()[1], d, s.n_max(), s.l_max()];
    DirectionalSequences::new(Tensor::new(shape, data)?, s.clone())
}

/// `(rows, D, HW)` → `(rows, D, n_max, L_max)`; the adjoint of [`place`].
pub(crate) fn unplace(stacked: &[f64], rows: usize, s: &ScanIndexSet) -> Vec<f64> {
    let (d, hw) = (s.num_directions(), s.pixels());
    let per_dir = s.n_max() * s.l_max();
    let plane = s.idx();
    let mut out = vec![0.0; rows * d * per_dir];
    for r in 0..rows {
        for k in 0..d {
            let src = &stacked[(r * d + k) * hw..(r * d + k + 1) * hw];
            let dst = &mut out[(r * d + k) * per_dir..(r * d + k + 1) * per_dir];
            for (o, &i) in dst.iter_mut().zip(&plane[k * per_dir..(k + 1) * per_dir]) {
                if i >= 0 {
                    *o = src[i as usize];
                }
            }
        }
    }
    out
}

/// Sum over directions of the inverse placement; the adjoint of [`o_scan`].
pub(crate) fn scatter_add(seqs: &[f64], rows: usize, s: &ScanIndexSet) -> Vec<f64> {
    let hw = s.pixels();
    let d = s.num_directions();
    let placed = place(seqs, rows, s);
    let mut out = vec![0.0; rows * hw];
    for r in 0..rows {
        for k in 0..d {
            let src = &placed[(r * d + k) * hw..(r * d + k + 1) * hw];
            out[r * hw..(r + 1) * hw]
                .iter_mut()
                .zip(src)
                .for_each(|(o, v)| *o += v);
        }
    }
    out
}

/// `Y[b, c, p] = sum_k w[b, k, p] * stacked[b, c, k, p]`, directions summed
/// in slot order.
pub(crate) fn weighted_sum(stacked: &Tensor, w: &DirectionWeights) -> Vec<f64> {
    let (b, c, d, hw) = (
        stacked.shape()[0],
        stacked.shape()[1],
        stacked.shape()[2],
        stacked.shape()[3],
    );
    let mut out = vec![0.0; b * c * hw];
    for bi in 0..b {
        for ci in 0..c {
            let dst = &mut out[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            for k in 0..d {
                let z = &stacked.data()[((bi * c + ci) * d + k) * hw..((bi * c + ci) * d + k + 1) * hw];
                let wk = &w.data()[(bi * d + k) * hw..(bi * d + k + 1) * hw];
                for p in 0..hw {
                    dst[p] += wk[p] * z[p];
                }
            }
        }
    }
    out
}

/// Inverse-maps directional outputs and fuses them with per-pixel weights
/// broadcast across channels.
pub fn o_merge(seqs: &DirectionalSequences, w: &DirectionWeights) -> Result<FeatureMap> {
    let s = &seqs.index;
    if (w.batch(), w.directions(), w.pixels()) != (seqs.batch(), s.num_directions(), s.pixels()) {
        return Err(Error::Shape(format!(
            "weights {:?} do not match sequences (B={}, D={}, HW={})",
            w.tensor().shape(),
            seqs.batch(),
            s.num_directions(),
            s.pixels()
        )));
    }
    let stacked = stack_by_pixel(seqs);
    FeatureMap::from_vec(
        seqs.batch(),
        seqs.channels(),
        s.height(),
        s.width(),
        weighted_sum(&stacked, w),
    )
}

/// Slot of `d` in `s`, or an error when the direction is inactive.
pub(crate) fn slot_of(s: &ScanIndexSet, d: Direction) -> Result<usize> {
    s.position(d)
        .ok_or_else(|| Error::InvalidArgument(format!("direction {d} is not active in this index set")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanlines::build_index_set;
    use crate::Rng;

    fn grid_2x2() -> FeatureMap {
        FeatureMap::from_vec(1, 1, 2, 2, vec![1., 2., 3., 4.]).unwrap()
    }

    fn valid_line(seqs: &DirectionalSequences, k: usize, l: usize) -> Vec<f64> {
        let s = seqs.index();
        let base = (k * s.n_max() + l) * s.l_max();
        seqs.data()[base..base + s.line_len(k, l)].to_vec()
    }

    #[test]
    fn hand_gather_2x2() {
        let s = Arc::new(build_index_set(2, 2));
        let seqs = o_scan(&grid_2x2(), &s).unwrap();
        assert_eq!(valid_line(&seqs, 0, 0), vec![1., 2.]);
        assert_eq!(valid_line(&seqs, 0, 1), vec![3., 4.]);
        assert_eq!(valid_line(&seqs, 2, 0), vec![1., 3.]);
        assert_eq!(valid_line(&seqs, 2, 1), vec![2., 4.]);
        assert_eq!(valid_line(&seqs, 4, 0), vec![2.]);
        assert_eq!(valid_line(&seqs, 4, 1), vec![1., 4.]);
        assert_eq!(valid_line(&seqs, 4, 2), vec![3.]);
    }

    #[test]
    fn constant_map_gathers_constant_with_zero_padding() {
        let s = Arc::new(build_index_set(3, 4));
        let x = FeatureMap::from_fn(2, 2, 3, 4, |_, _, _, _| 2.5).unwrap();
        let seqs = o_scan(&x, &s).unwrap();
        for (v, m) in seqs.data().iter().zip(seqs.mask()) {
            assert_eq!(*v, if m { 2.5 } else { 0.0 });
        }
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let s = Arc::new(build_index_set(3, 3));
        assert!(o_scan(&grid_2x2(), &s).is_err());
    }

    #[test]
    fn impulse_stacks_into_every_direction() {
        let s = Arc::new(build_index_set(3, 3));
        let x = FeatureMap::from_fn(1, 1, 3, 3, |_, _, i, j| if (i, j) == (1, 2) { 1.0 } else { 0.0 }).unwrap();
        let st = stack_by_pixel(&o_scan(&x, &s).unwrap());
        for k in 0..8 {
            for p in 0..9 {
                assert_eq!(st.get(&[0, 0, k, p]), if p == 5 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn stack_inverts_gather() {
        let mut rng = Rng::new(9);
        let s = Arc::new(build_index_set(5, 7));
        let x = FeatureMap::from_fn(2, 3, 5, 7, |_, _, _, _| rng.normal()).unwrap();
        let st = stack_by_pixel(&o_scan(&x, &s).unwrap());
        for b in 0..2 {
            for c in 0..3 {
                for k in 0..8 {
                    for p in 0..35 {
                        assert_eq!(st.get(&[b, c, k, p]), x.at(b, c, p / 7, p % 7));
                    }
                }
            }
        }
        assert_eq!(unstack(&st, &s).unwrap(), o_scan(&x, &s).unwrap());
    }

    #[test]
    fn weights_validation_and_softmax() {
        assert!(DirectionWeights::new(Tensor::full(&[1, 8, 2], 0.125)).is_ok());
        assert!(DirectionWeights::new(Tensor::full(&[1, 8, 2], 0.2)).is_err());

        let mut scores = Tensor::zeros(&[1, 8, 1]);
        let w = DirectionWeights::softmax(&scores);
        assert!(w.data().iter().all(|&v| (v - 0.125).abs() < 1e-15));

        scores.data_mut()[0] = 1.0;
        let w = DirectionWeights::softmax(&scores);
        let e = std::f64::consts::E;
        assert!((w.data()[0] - e / (e + 7.0)).abs() < 1e-15);
        assert!((w.data()[0] - 0.279708).abs() < 1e-6);
        assert!((w.data()[1] - 0.10290).abs() < 1e-5);

        let shifted = Tensor::new(vec![1, 8, 1], scores.data().iter().map(|v| v + 123.0).collect()).unwrap();
        let w2 = DirectionWeights::softmax(&shifted);
        for (a, b) in w.data().iter().zip(w2.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_examples() {
        let mut rng = Rng::new(4);
        let s = Arc::new(build_index_set(4, 3));
        let x = FeatureMap::from_fn(2, 2, 4, 3, |_, _, _, _| rng.normal()).unwrap();
        let seqs = o_scan(&x, &s).unwrap();

        let y = o_merge(&seqs, &DirectionWeights::uniform(2, 8, 12)).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= 1e-12);
        }

        // scale direction 3's sequences; a one-hot merge on it sees only them
        let mut scaled = seqs.clone();
        let per = s.n_max() * s.l_max();
        for r in 0..4 {
            let base = (r * 8 + 3) * per;
            scaled.data_mut()[base..base + per].iter_mut().for_each(|v| *v *= 3.0);
        }
        let y = o_merge(&scaled, &DirectionWeights::one_hot(2, 8, 12, 3)).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - 3.0 * b).abs() <= 1e-12);
        }

        assert!(o_merge(&seqs, &DirectionWeights::uniform(1, 8, 12)).is_err());
    }
}
