//! SGD training of a small encoder with a linear head on the toy dataset.

use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::harness::dataset::{ToyDataset, CLASSES};
use crate::io::write_csv;
use crate::omodule::encoder::{Encoder, EncoderConfig, NormalizationKind};
use crate::rng::Rng;
use crate::sscan::GateMode;
use crate::tensor::Tensor;

pub const TRAIN_LOG_HEADER: [&str; 5] = ["epoch", "train_loss", "train_acc", "eval_acc", "seconds"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub directions: usize,
    pub tsm: bool,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub channels: usize,
    pub d_state: usize,
    pub blocks: usize,
    pub per_direction_params: bool,
    pub gate: GateMode,
    pub normalization: NormalizationKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            directions: 8,
            tsm: true,
            epochs: 30,
            lr: 0.05,
            batch_size: 16,
            seed: 0,
            channels: 8,
            d_state: 4,
            blocks: 1,
            per_direction_params: true,
            gate: GateMode::AffineSigmoid,
            normalization: NormalizationKind::Continuous,
        }
    }
}

impl TrainConfig {
    /// Parses `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.encoder_config().validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("{key}: bad value {value:?}"));
        let num = |v: &str| v.parse::<usize>().map_err(|_| bad());
        match key {
            "epochs" => self.epochs = num(value)?,
            "lr" => self.lr = value.parse().map_err(|_| bad())?,
            "batch_size" => self.batch_size = num(value)?,
            "blocks" => self.blocks = num(value)?,
            "channels" => self.channels = num(value)?,
            // the remaining keys share the encoder's spelling
            _ => {
                let mut enc = self.encoder_config();
                enc.set(key, value)?;
                self.directions = enc.directions;
                self.tsm = enc.tsm;
                self.seed = enc.seed;
                self.d_state = enc.d_state;
                self.per_direction_params = enc.per_direction_params;
                self.gate = enc.gate;
                self.normalization = enc.normalization;
                if enc.in_channels != 1 || enc.classes != CLASSES || enc.stages != vec![(self.blocks, self.channels)] {
                    return Err(Error::Config(format!("{key} is fixed by the toy task")));
                }
            }
        }
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            in_channels: 1,
            stages: vec![(self.blocks, self.channels)],
            d_state: self.d_state,
            gate: self.gate,
            per_direction_params: self.per_direction_params,
            directions: self.directions,
            tsm: self.tsm,
            normalization: self.normalization,
            classes: CLASSES,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub eval_acc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<EpochRow>,
}

impl TrainLog {
    pub fn final_eval_acc(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.eval_acc)
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.epoch.to_string(),
                    format!("{:.6}", r.train_loss),
                    format!("{:.6}", r.train_acc),
                    format!("{:.6}", r.eval_acc),
                    format!("{:.3}", r.seconds),
                ]
            })
            .collect()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path, &TRAIN_LOG_HEADER, &self.csv_rows())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Encoder,
    pub log: TrainLog,
    /// `(epoch, parameters)` every `checkpoint_every(epochs)` epochs.
    pub checkpoints: Vec<(usize, Encoder)>,
}

pub fn checkpoint_every(epochs: usize) -> usize {
    (epochs / 6).max(1)
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits. Also returns the number of correct argmax predictions.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Vec<f64>, usize) {
    let k = logits.shape()[1];
    let b = labels.len();
    let mut grad = vec![0.0; b * k];
    let mut loss = 0.0;
    let mut correct = 0;
    for (bi, &label) in labels.iter().enumerate() {
        let row = &logits.data()[bi * k..(bi + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        loss += sum.ln() + max - row[label];
        for (j, v) in row.iter().enumerate() {
            let p = (v - max).exp() / sum;
            grad[bi * k + j] = (p - if j == label { 1.0 } else { 0.0 }) / b as f64;
        }
        if argmax(row) == label {
            correct += 1;
        }
    }
    (loss / b as f64, grad, correct)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of samples whose argmax logit equals the label.
pub fn evaluate(model: &Encoder, data: &ToyDataset, batch_size: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch(chunk)?;
        let logits = model.logits(&x)?;
        let k = logits.shape()[1];
        correct += labels
            .iter()
            .enumerate()
            .filter(|&(bi, &l)| argmax(&logits.data()[bi * k..(bi + 1) * k]) == l)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// `p -= lr * g` for every parameter tensor.
pub fn sgd_step(model: &mut Encoder, grads: &Encoder, lr: f64) {
    for ((_, p), (_, g)) in model.named_tensors_mut().into_iter().zip(grads.named_tensors()) {
        p.data_mut().iter_mut().zip(g.data()).for_each(|(p, g)| *p -= lr * g);
    }
}

pub fn toy_train(cfg: &TrainConfig, train: &ToyDataset, eval: &ToyDataset) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 || cfg.epochs == 0 || cfg.lr.is_nan() || cfg.lr < 0.0 {
        return Err(Error::InvalidArgument("epochs and batch size must be positive, lr non-negative".into()));
    }
    let mut model = Encoder::new(cfg.encoder_config())?;
    let mut rng = Rng::new(cfg.seed ^ 0x7a11);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    let mut checkpoints = Vec::new();
    let every = checkpoint_every(cfg.epochs);
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = train.batch(chunk)?;
            let (logits, cache) = match model.forward(&x) {
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss: f64::NAN }),
                r => r?,
            };
            let (loss, g_logits, c) = softmax_cross_entropy(&logits, &labels);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += c;
            let (_, grads) = model.backward(cache, &g_logits);
            sgd_step(&mut model, &grads, cfg.lr);
        }
        let eval_acc = evaluate(&model, eval, 64)?;
        log.rows.push(EpochRow {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            eval_acc,
            seconds: start.elapsed().as_secs_f64(),
        });
        if epoch % every == 0 || epoch == cfg.epochs {
            checkpoints.push((epoch, model.clone()));
        }
    }
    Ok(TrainOutcome {
        model,
        log,
        checkpoints,
    })
}

/// Largest deviation of any block's direction weights from uniform over
/// the given samples.
pub fn weight_divergence(model: &Encoder, data: &ToyDataset, count: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..count.min(data.len())).collect();
    let mut dev = 0.0f64;
    for chunk in idx.chunks(32) {
        let (x, _) = data.batch(chunk)?;
        let (_, cache) = model.forward(&x)?;
        for w in cache.block_weights() {
            dev = dev.max(w.max_deviation_from_uniform());
        }
    }
    Ok(dev)
}
