//! Oriented-bar images for the toy classification task.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::FeatureMap;

pub const CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub height: usize,
    pub width: usize,
    pub sigma: f64,
    pub count: usize,
    pub seed: u64,
}

/// Single-channel images with labels: 0 horizontal, 1 vertical,
/// 2 diagonal down-right, 3 diagonal down-left.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub config: DatasetConfig,
    images: Vec<f64>,
    labels: Vec<usize>,
}

/// Unit-intensity bar of class `label` at `offset`, without noise.
pub fn draw_bar(label: usize, offset: isize, h: usize, w: usize) -> Vec<f64> {
    let mut img = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let on = match label {
                0 => i == offset,
                1 => j == offset,
                2 => i - j == offset,
                _ => i + j == offset,
            };
            if on {
                img[i as usize * w + j as usize] = 1.0;
            }
        }
    }
    img
}

/// Offsets for which the bar has at least `min(h, w) / 2` pixels.
fn offset_range(label: usize, h: usize, w: usize) -> (isize, isize) {
    let (h, w) = (h as isize, w as isize);
    let half = h.min(w) / 2;
    match label {
        0 => (0, h - 1),
        1 => (0, w - 1),
        // line i - j = o holds min(h, w) - |o| pixels roughly; keep it long
        2 => (-(w - 1) + half, (h - 1) - half),
        _ => (half, h + w - 2 - half),
    }
}

impl ToyDataset {
    pub fn generate(config: DatasetConfig) -> Result<Self> {
        let (h, w) = (config.height, config.width);
        if h < 5 || w < 5 {
            return Err(Error::InvalidArgument(format!("toy images need at least 5x5 pixels, got {h}x{w}")));
        }
        if config.sigma.is_nan() || config.sigma < 0.0 || config.count == 0 {
            return Err(Error::InvalidArgument("noise must be non-negative and count positive".into()));
        }
        let mut rng = Rng::new(config.seed);
        let mut labels: Vec<usize> = (0..config.count).map(|i| i % CLASSES).collect();
        rng.shuffle(&mut labels);
        let mut images = Vec::with_capacity(config.count * h * w);
        for &label in &labels {
            let (lo, hi) = offset_range(label, h, w);
            let offset = lo + rng.below((hi - lo + 1) as usize) as isize;
            let mut img = draw_bar(label, offset, h, w);
            if config.sigma > 0.0 {
                img.iter_mut().for_each(|v| *v += config.sigma * rng.normal());
            }
            images.extend(img);
        }
        Ok(Self { config, images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.config.height * self.config.width;
        &self.images[i * n..(i + 1) * n]
    }

    pub fn class_counts(&self) -> [usize; CLASSES] {
        let mut c = [0; CLASSES];
        self.labels.iter().for_each(|&l| c[l] += 1);
        c
    }

    /// Stacks the listed samples into a `(B, 1, H, W)` map.
    pub fn batch(&self, indices: &[usize]) -> Result<(FeatureMap, Vec<usize>)> {
        let mut data = Vec::with_capacity(indices.len() * self.config.height * self.config.width);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let fm = FeatureMap::from_vec(indices.len(), 1, self.config.height, self.config.width, data)?;
        Ok((fm, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}
