//! Staged encoder built from O-VSS blocks with a pooled linear head.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::io::{load_tensor_dir, save_tensor_dir};
use crate::omodule::block::{o_vss_block_backward, o_vss_block_forward, BlockCache, BlockParams, Projection};
use crate::omodule::ss2d::{Ss2dOptions, WeightMode};
use crate::rng::Rng;
use crate::scanlines::{Direction, ScanIndexSet};
use crate::sscan::{DiscretizeOptions, GateMode, Normalization};
use crate::tensor::{FeatureMap, Tensor};

/// How the state transition is scaled by the direction count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationKind {
    None,
    /// Continuous-time division by the configured direction count.
    #[default]
    Continuous,
    /// Discrete transition division by the configured direction count.
    Discrete,
    /// Continuous-time division by eight regardless of direction count.
    Octa,
}

impl NormalizationKind {
    pub fn resolve(self, directions: usize) -> Normalization {
        match self {
            NormalizationKind::None => Normalization::None,
            NormalizationKind::Continuous => Normalization::Continuous { directions },
            NormalizationKind::Discrete => Normalization::Discrete { directions },
            NormalizationKind::Octa => Normalization::Octa,
        }
    }

    fn name(self) -> &'static str {
        match self {
            NormalizationKind::None => "none",
            NormalizationKind::Continuous => "continuous",
            NormalizationKind::Discrete => "discrete",
            NormalizationKind::Octa => "octa",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => NormalizationKind::None,
            "continuous" => NormalizationKind::Continuous,
            "discrete" => NormalizationKind::Discrete,
            "octa" => NormalizationKind::Octa,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub in_channels: usize,
    /// `(blocks, channels)` per stage.
    pub stages: Vec<(usize, usize)>,
    pub d_state: usize,
    pub gate: GateMode,
    /// Separate SSM parameters for each direction instead of one shared set.
    pub per_direction_params: bool,
    pub directions: usize,
    /// Learned traversal selection; uniform fusion when off.
    pub tsm: bool,
    pub normalization: NormalizationKind,
    pub classes: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            stages: vec![(1, 8)],
            d_state: 4,
            gate: GateMode::AffineSigmoid,
            per_direction_params: false,
            directions: 8,
            tsm: true,
            normalization: NormalizationKind::default(),
            classes: 4,
            seed: 0,
        }
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: expected an unsigned integer, got {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on/off, got {v:?}"))),
    }
}

impl EncoderConfig {
    /// Parses `key = value` lines; `#` starts a comment. Missing keys keep
    /// their defaults.
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
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "channels" | "in_channels" => self.in_channels = parse_usize(key, value)?,
            "stages" => {
                self.stages = value
                    .split(',')
                    .map(|st| {
                        let (n, c) = st
                            .trim()
                            .split_once('x')
                            .ok_or_else(|| Error::Config(format!("stages: expected BLOCKSxCHANNELS, got {st:?}")))?;
                        Ok((parse_usize(key, n)?, parse_usize(key, c)?))
                    })
                    .collect::<Result<_>>()?
            }
            "d_state" => self.d_state = parse_usize(key, value)?,
            "gate" => {
                self.gate = match value {
                    "one" => GateMode::ConstantOne,
                    "sigmoid" => GateMode::AffineSigmoid,
                    _ => return Err(Error::Config(format!("gate: expected one|sigmoid, got {value:?}"))),
                }
            }
            "per_direction_params" => self.per_direction_params = parse_bool(key, value)?,
            "directions" => self.directions = parse_usize(key, value)?,
            "tsm" => self.tsm = parse_bool(key, value)?,
            "normalization" => {
                self.normalization = NormalizationKind::parse(value).ok_or_else(|| {
                    Error::Config(format!(
                        "normalization: expected none|continuous|discrete|octa, got {value:?}"
                    ))
                })?
            }
            "classes" => self.classes = parse_usize(key, value)?,
            "seed" => self.seed = value.parse().map_err(|_| Error::Config(format!("seed: bad value {value:?}")))?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.d_state == 0 || self.classes == 0 {
            return Err(Error::Config("channels, d_state and classes must be positive".into()));
        }
        if self.stages.is_empty() || self.stages.iter().any(|&(n, c)| n == 0 || c == 0) {
            return Err(Error::Config("every stage needs at least one block and one channel".into()));
        }
        Direction::subset(self.directions).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let stages: Vec<String> = self.stages.iter().map(|(n, c)| format!("{n}x{c}")).collect();
        let gate = match self.gate {
            GateMode::ConstantOne => "one",
            GateMode::AffineSigmoid => "sigmoid",
        };
        let onoff = |b: bool| if b { "on" } else { "off" };
        let mut s = String::new();
        let _ = writeln!(s, "channels = {}", self.in_channels);
        let _ = writeln!(s, "stages = {}", stages.join(","));
        let _ = writeln!(s, "d_state = {}", self.d_state);
        let _ = writeln!(s, "gate = {gate}");
        let _ = writeln!(s, "per_direction_params = {}", onoff(self.per_direction_params));
        let _ = writeln!(s, "directions = {}", self.directions);
        let _ = writeln!(s, "tsm = {}", onoff(self.tsm));
        let _ = writeln!(s, "normalization = {}", self.normalization.name());
        let _ = writeln!(s, "classes = {}", self.classes);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    pub fn direction_set(&self) -> Vec<Direction> {
        Direction::subset(self.directions).expect("validated direction count")
    }

    pub fn ss2d_options(&self) -> Ss2dOptions {
        Ss2dOptions {
            weights: if self.tsm { WeightMode::Learned } else { WeightMode::Uniform },
            discretize: DiscretizeOptions {
                normalization: self.normalization.resolve(self.directions),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// Channel change after 2x2 pooling; absent on the first stage.
    pub down: Option<Projection>,
    pub blocks: Vec<BlockParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub stem: Option<Projection>,
    pub stages: Vec<Stage>,
    pub head: Projection,
}

enum Step {
    Stem { input: Vec<f64>, hw: usize },
    Pool { h: usize, w: usize, c: usize },
    Down { input: Vec<f64>, hw: usize, idx: usize },
    Block { cache: Box<BlockCache>, index: Arc<ScanIndexSet>, stage: usize, block: usize },
}

/// Forward intermediates for [`Encoder::backward`].
pub struct EncoderCache {
    steps: Vec<Step>,
    batch: usize,
    final_shape: (usize, usize),
    pooled: Vec<f64>,
    input_shape: (usize, usize, usize),
}

impl EncoderCache {
    /// Globally pooled features `(B, C_last)` feeding the head.
    pub fn features(&self) -> &[f64] {
        &self.pooled
    }

    /// Direction weights of every block, in forward order.
    pub fn block_weights(&self) -> Vec<&crate::omodule::merge::DirectionWeights> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Block { cache, .. } => Some(cache.ss2d().weights()),
                _ => None,
            })
            .collect()
    }
}

fn mean_pool(x: &[f64], bc: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; bc * ho * wo];
    for r in 0..bc {
        for i in 0..ho {
            for j in 0..wo {
                let at = |di: usize, dj: usize| x[r * h * w + (2 * i + di) * w + 2 * j + dj];
                out[r * ho * wo + i * wo + j] = 0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1));
            }
        }
    }
    out
}

fn mean_pool_backward(g: &[f64], bc: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; bc * h * w];
    for r in 0..bc {
        for i in 0..ho {
            for j in 0..wo {
                let v = 0.25 * g[r * ho * wo + i * wo + j];
                for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    out[r * h * w + (2 * i + di) * w + 2 * j + dj] = v;
                }
            }
        }
    }
    out
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed);
        let groups = if config.per_direction_params { config.directions } else { 1 };
        let c0 = config.stages[0].1;
        let stem = (config.in_channels != c0).then(|| Projection::init(config.in_channels, c0, 1.0, &mut rng));
        let mut stages = Vec::new();
        let mut prev = c0;
        for (si, &(n_blocks, c)) in config.stages.iter().enumerate() {
            let down = (si > 0).then(|| Projection::init(prev, c, 1.0, &mut rng));
            let blocks = (0..n_blocks)
                .map(|_| BlockParams::init(c, config.d_state, groups, config.gate, &mut rng))
                .collect();
            stages.push(Stage { down, blocks });
            prev = c;
        }
        let head = Projection::init(prev, config.classes, 1.0, &mut rng);
        Ok(Self {
            config,
            stem,
            stages,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            stem: self.stem.as_ref().map(Projection::zeros_like),
            stages: self
                .stages
                .iter()
                .map(|s| Stage {
                    down: s.down.as_ref().map(Projection::zeros_like),
                    blocks: s.blocks.iter().map(BlockParams::zeros_like).collect(),
                })
                .collect(),
            head: self.head.zeros_like(),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(p) = &self.stem {
            out.push(("stem.w".to_string(), &p.w));
            out.push(("stem.b".to_string(), &p.b));
        }
        for (si, st) in self.stages.iter().enumerate() {
            if let Some(p) = &st.down {
                out.push((format!("stage{si}.down.w"), &p.w));
                out.push((format!("stage{si}.down.b"), &p.b));
            }
            for (bi, bp) in st.blocks.iter().enumerate() {
                out.extend(bp.named_tensors().into_iter().map(|(n, t)| (format!("stage{si}.block{bi}.{n}"), t)));
            }
        }
        out.push(("head.w".to_string(), &self.head.w));
        out.push(("head.b".to_string(), &self.head.b));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        if let Some(p) = &mut self.stem {
            out.push(("stem.w".to_string(), &mut p.w));
            out.push(("stem.b".to_string(), &mut p.b));
        }
        for (si, st) in self.stages.iter_mut().enumerate() {
            if let Some(p) = &mut st.down {
                out.push((format!("stage{si}.down.w"), &mut p.w));
                out.push((format!("stage{si}.down.b"), &mut p.b));
            }
            for (bi, bp) in st.blocks.iter_mut().enumerate() {
                out.extend(
                    bp.named_tensors_mut()
                        .into_iter()
                        .map(|(n, t)| (format!("stage{si}.block{bi}.{n}"), t)),
                );
            }
        }
        out.push(("head.w".to_string(), &mut self.head.w));
        out.push(("head.b".to_string(), &mut self.head.b));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Spatial output of the last stage, before pooling and the head.
    pub fn features(&self, x: &FeatureMap) -> Result<(FeatureMap, EncoderCache)> {
        if x.channels() != self.config.in_channels {
            return Err(Error::Shape(format!(
                "encoder expects {} input channels, got {}",
                self.config.in_channels,
                x.channels()
            )));
        }
        let dirs = self.config.direction_set();
        let opts = self.config.ss2d_options();
        let b = x.batch();
        let (mut h, mut w) = (x.height(), x.width());
        let mut c = x.channels();
        let mut cur = x.data().to_vec();
        let mut steps = Vec::new();
        if let Some(p) = &self.stem {
            let next = p.apply(&cur, b, h * w);
            steps.push(Step::Stem { input: cur, hw: h * w });
            cur = next;
            c = p.c_out();
        }
        for (si, st) in self.stages.iter().enumerate() {
            if let Some(p) = &st.down {
                if h < 2 || w < 2 {
                    return Err(Error::Shape(format!("cannot pool a {h}x{w} map for stage {si}")));
                }
                cur = mean_pool(&cur, b * c, h, w);
                steps.push(Step::Pool { h, w, c });
                h /= 2;
                w /= 2;
                let next = p.apply(&cur, b, h * w);
                steps.push(Step::Down {
                    input: cur,
                    hw: h * w,
                    idx: si,
                });
                cur = next;
                c = p.c_out();
            }
            let index = Arc::new(ScanIndexSet::build(h, w, &dirs));
            for (bi, bp) in st.blocks.iter().enumerate() {
                let fm = FeatureMap::from_vec(b, c, h, w, cur)?;
                let (y, cache) = o_vss_block_forward(&fm, bp, &index, &opts)?;
                steps.push(Step::Block {
                    cache: Box::new(cache),
                    index: index.clone(),
                    stage: si,
                    block: bi,
                });
                cur = y.into_tensor().into_data();
            }
        }
        let out = FeatureMap::from_vec(b, c, h, w, cur)?;
        let cache = EncoderCache {
            steps,
            batch: b,
            final_shape: (c, h * w),
            pooled: Vec::new(),
            input_shape: (x.channels(), x.height(), x.width()),
        };
        Ok((out, cache))
    }

    /// Returns logits `(B, classes)` and the cache for the reverse pass.
    pub fn forward(&self, x: &FeatureMap) -> Result<(Tensor, EncoderCache)> {
        let (feat, mut cache) = self.features(x)?;
        let hw = feat.pixels();
        let pooled: Vec<f64> = feat.data().chunks(hw).map(|r| r.iter().sum::<f64>() / hw as f64).collect();
        let logits = self.head.apply(&pooled, x.batch(), 1);
        cache.pooled = pooled;
        Ok((Tensor::new(vec![x.batch(), self.config.classes], logits)?, cache))
    }

    pub fn logits(&self, x: &FeatureMap) -> Result<Tensor> {
        self.forward(x).map(|(l, _)| l)
    }

    /// Reverse pass from `d loss / d logits`; returns the input gradient and
    /// parameter gradients shaped like `self`.
    pub fn backward(&self, cache: EncoderCache, g_logits: &[f64]) -> (Vec<f64>, Encoder) {
        let mut grads = self.zeros_like();
        let b = cache.batch;
        let (c, hw) = cache.final_shape;
        let g_pooled = self.head.backward(&cache.pooled, g_logits, b, 1, &mut grads.head);
        let g: Vec<f64> = g_pooled
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v / hw as f64, hw))
            .collect();
        debug_assert_eq!(g.len(), b * c * hw);
        let gx = self.backward_features(cache, g, &mut grads);
        (gx, grads)
    }

    /// Reverse pass from `d loss / d features` (the output of
    /// [`Encoder::features`]); parameter gradients accumulate into `grads`.
    pub fn backward_features(&self, cache: EncoderCache, mut g: Vec<f64>, grads: &mut Encoder) -> Vec<f64> {
        let b = cache.batch;
        let opts = self.config.ss2d_options();
        for step in cache.steps.into_iter().rev() {
            g = match step {
                Step::Block {
                    cache,
                    index,
                    stage,
                    block,
                } => {
                    let bp = &self.stages[stage].blocks[block];
                    let (gx, bg) = o_vss_block_backward(bp, &index, &opts, &cache, &g);
                    for ((_, dst), (_, src)) in grads.stages[stage].blocks[block]
                        .named_tensors_mut()
                        .into_iter()
                        .zip(bg.named_tensors())
                    {
                        dst.data_mut().iter_mut().zip(src.data()).for_each(|(d, s)| *d += s);
                    }
                    gx
                }
                Step::Down { input, hw, idx } => {
                    let p = self.stages[idx].down.as_ref().expect("down projection");
                    let gd = grads.stages[idx].down.as_mut().expect("down projection");
                    p.backward(&input, &g, b, hw, gd)
                }
                Step::Pool { h, w, c } => mean_pool_backward(&g, b * c, h, w),
                Step::Stem { input, hw } => {
                    let p = self.stem.as_ref().expect("stem");
                    p.backward(&input, &g, b, hw, grads.stem.as_mut().expect("stem"))
                }
            };
        }
        let (ci, h, w) = cache.input_shape;
        debug_assert_eq!(g.len(), b * ci * h * w);
        g
    }

    /// Writes `config.txt`, `manifest.txt` and one tensor file per parameter.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = dir.join("config.txt");
        std::fs::write(&cfg, self.config.to_text()).map_err(|e| Error::io(&cfg, e))?;
        save_tensor_dir(dir, self.named_tensors())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let cfg_path = dir.join("config.txt");
        let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let mut model = Self::new(EncoderConfig::parse(&text)?)?;
        let tensors = load_tensor_dir(dir)?;
        let mut slots = model.named_tensors_mut();
        if tensors.len() != slots.len() {
            return Err(Error::Config(format!(
                "model directory holds {} tensors, configuration needs {}",
                tensors.len(),
                slots.len()
            )));
        }
        for (name, t) in tensors {
            let slot = slots
                .iter_mut()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::Config(format!("unexpected tensor {name:?}")))?;
            if slot.1.shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "{name}: stored shape {:?}, expected {:?}",
                    t.shape(),
                    slot.1.shape()
                )));
            }
            slot.1.data_mut().copy_from_slice(t.data());
        }
        Ok(model)
    }
}
