//! Dense row-major tensors and the (B, C, H, W) feature map built on them.

use crate::error::{Error, Result};

/// Storage precision used when a tensor is written to disk.
///
/// Values are always held in memory as `f64`; an `F32` tensor simply
/// promises that every value is exactly representable in single precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DType {
    #[default]
    F64,
    F32,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F64 => 0,
            DType::F32 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F64),
            1 => Some(DType::F32),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    dtype: DType,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {expected} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            dtype: DType::F64,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            dtype: DType::F64,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            dtype: DType::F64,
        }
    }

    /// Converts the storage precision. Going to `F32` rounds every value.
    pub fn with_dtype(mut self, dtype: DType) -> Self {
        if dtype == DType::F32 {
            for v in &mut self.data {
                *v = *v as f32 as f64;
            }
        }
        self.dtype = dtype;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major strides, last index fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for d in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.shape[d + 1];
        }
        strides
    }

    /// Flat offset of a multi-index. Panics when out of bounds.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        // Horner form; equivalent to the dot product with `strides()`.
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of bounds for dimension of size {n}");
            acc * n + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A `(B, C, H, W)` spatial signal with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    tensor: Tensor,
}

impl FeatureMap {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 4 {
            return Err(Error::Shape(format!(
                "feature map must be rank 4 (B, C, H, W), got {:?}",
                tensor.shape()
            )));
        }
        if tensor.shape().contains(&0) {
            return Err(Error::Shape(format!(
                "feature map dimensions must be >= 1, got {:?}",
                tensor.shape()
            )));
        }
        if !tensor.all_finite() {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self { tensor })
    }

    pub fn zeros(b: usize, c: usize, h: usize, w: usize) -> Self {
        assert!(b >= 1 && c >= 1 && h >= 1 && w >= 1, "empty feature map");
        Self {
            tensor: Tensor::zeros(&[b, c, h, w]),
        }
    }

    pub fn from_vec(b: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Tensor::new(vec![b, c, h, w], data)?)
    }

    pub fn from_fn(
        b: usize,
        c: usize,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(b * c * h * w);
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        data.push(f(bi, ci, i, j));
                    }
                }
            }
        }
        Self::from_vec(b, c, h, w, data)
    }

    pub fn batch(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[3]
    }

    pub fn pixels(&self) -> usize {
        self.height() * self.width()
    }

    pub fn at(&self, b: usize, c: usize, i: usize, j: usize) -> f64 {
        let (ch, h, w) = (self.channels(), self.height(), self.width());
        self.tensor.data()[((b * ch + c) * h + i) * w + j]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn data(&self) -> &[f64] {
        self.tensor.data()
    }

    /// Mutable access for in-place construction. Callers are responsible
    /// for keeping values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        self.tensor.data_mut()
    }

    /// Swaps the two spatial axes.
    pub fn transpose(&self) -> Self {
        let (b, c, h, w) = (self.batch(), self.channels(), self.height(), self.width());
        let mut out = Self::zeros(b, c, w, h);
        let dst = out.data_mut();
        for bc in 0..b * c {
            for i in 0..h {
                for j in 0..w {
                    dst[(bc * w + j) * h + i] = self.tensor.data()[(bc * h + i) * w + j];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn feature_map_rejects_nan_and_empty() {
        let t = Tensor::new(vec![1, 1, 1, 2], vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(FeatureMap::new(t), Err(Error::NonFinite(_))));
        let t = Tensor::new(vec![1, 0, 1, 1], vec![]).unwrap();
        assert!(FeatureMap::new(t).is_err());
    }

    #[test]
    fn f32_conversion_rounds() {
        let t = Tensor::new(vec![1], vec![0.1]).unwrap().with_dtype(DType::F32);
        assert_eq!(t.data()[0], 0.1f32 as f64);
    }

    #[test]
    fn transpose_swaps_axes() {
        let x = FeatureMap::from_vec(1, 1, 2, 3, vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let t = x.transpose();
        assert_eq!((t.height(), t.width()), (3, 2));
        assert_eq!(t.data(), &[0., 3., 1., 4., 2., 5.]);
        assert_eq!(t.transpose(), x);
    }

    proptest! {
        #[test]
        fn offset_matches_stride_dot_product(
            shape in proptest::collection::vec(1usize..6, 1..6),
            seed in any::<u64>(),
        ) {
            let t = Tensor::zeros(&shape);
            let mut s = seed;
            let index: Vec<usize> = shape.iter().map(|&n| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) as usize) % n
            }).collect();
            let by_strides: usize = index.iter().zip(t.strides()).map(|(i, s)| i * s).sum();
            prop_assert_eq!(t.offset(&index), by_strides);
        }
    }
}
