//! `octoscan` command-line tool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use octoscan::analysis::{
    erf, expected_support, isotropy_score, materialize_operator, spoke_masses, support_pattern, EncoderProbe, ErfMap,
    Ss2dProbe,
};
use octoscan::harness::bench::{bench_scaling, save_bench_csv};
use octoscan::harness::dataset::{DatasetConfig, ToyDataset};
use octoscan::harness::fig6::repro_fig6;
use octoscan::harness::train::{toy_train, weight_divergence, TrainConfig};
use octoscan::io::{heatmap_save_pgm, tensor_load, tensor_save, write_csv};
use octoscan::omodule::{o_ss2d_forward, AttentionParams};
use octoscan::sscan::{discretize, scanline_recurrence, semiseparable_matrix};
use octoscan::{
    DType, Direction, DiscretizeOptions, Encoder, EncoderConfig, FeatureMap, GateMode, Rng, ScanIndexSet,
    Ss2dOptions, SsmParams, Tensor, WeightMode,
};

#[derive(Parser)]
#[command(name = "octoscan", version, about = "Octa-directional selective scan toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build scan-line index tables and write them with a text summary.
    Index(IndexArgs),
    /// Run an encoder on a stored input tensor.
    Forward(ForwardArgs),
    /// Compare the recurrence with its dense semiseparable form.
    OracleCheck(OracleArgs),
    /// Materialize the effective linear operator of one O-SS2D layer.
    Operator(OperatorArgs),
    /// Effective receptive field of a model's center output.
    Erf(ErfArgs),
    /// Score the isotropy of a stored ERF map.
    Isotropy(IsotropyArgs),
    /// Train the toy classifier on oriented bars.
    ToyTrain(ToyTrainArgs),
    /// Time the O-SS2D forward pass across grid sizes.
    Bench(BenchArgs),
    /// Write per-direction-pair and aggregate operator heatmaps.
    ReproFig6(Fig6Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum DTypeArg {
    F64,
    F32,
}

impl From<DTypeArg> for DType {
    fn from(d: DTypeArg) -> Self {
        match d {
            DTypeArg::F64 => DType::F64,
            DTypeArg::F32 => DType::F32,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Uniform,
    Learned,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

/// `H`, `HxW` or `H×W`.
fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(['x', 'X', '×']).collect();
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad size {s:?}"));
    let (h, w) = match parts.as_slice() {
        [n] => (num(n)?, num(n)?),
        [h, w] => (num(h)?, num(w)?),
        _ => return Err(format!("bad size {s:?}, expected HxW")),
    };
    if h == 0 || w == 0 {
        return Err("size must be positive".into());
    }
    Ok((h, w))
}

fn parse_center(s: &str) -> Result<(usize, usize), String> {
    let (i, j) = s.split_once(',').ok_or_else(|| format!("bad center {s:?}, expected I,J"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad center {s:?}"));
    Ok((num(i)?, num(j)?))
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    height: usize,
    #[arg(long)]
    width: usize,
    /// Active direction count: 2, 4 or 8.
    #[arg(long, default_value_t = 8)]
    directions: usize,
    /// Output directory for idx.oten, mask.oten and summary.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForwardArgs {
    /// Model directory, or a bare config file for a freshly initialized model.
    #[arg(long)]
    model: PathBuf,
    /// Input tensor `(B, C, H, W)` or `(C, H, W)`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write logits `(B, classes)` instead of the spatial features.
    #[arg(long)]
    logits: bool,
    /// Also save the (possibly freshly initialized) model here.
    #[arg(long)]
    save_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DTypeArg::F64)]
    dtype: DTypeArg,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 32)]
    len: usize,
    #[arg(long, default_value_t = 4)]
    d_state: usize,
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
}

#[derive(Args)]
struct OperatorArgs {
    #[arg(long, value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, value_enum, default_value_t = WeightsArg::Uniform)]
    weights: WeightsArg,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    #[arg(long, default_value_t = 4)]
    d_state: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DTypeArg::F64)]
    dtype: DTypeArg,
}

#[derive(Args)]
struct ErfArgs {
    /// Model directory; without it a single freshly initialized block is used.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_parser = parse_size)]
    size: (usize, usize),
    /// Label written into the CSV, e.g. the checkpoint epoch.
    #[arg(long, default_value = "init")]
    epoch_tag: String,
    /// Output pixel `I,J`; defaults to the grid center.
    #[arg(long, value_parser = parse_center)]
    center: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// PGM heatmap path; `.csv` and `.oten` siblings are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IsotropyArgs {
    /// `(H, W)` ERF tensor.
    #[arg(long)]
    erf: PathBuf,
    #[arg(long, value_parser = parse_center)]
    center: Option<(usize, usize)>,
}

#[derive(Args)]
struct ToyTrainArgs {
    /// Flat key = value training config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    directions: Option<usize>,
    #[arg(long, value_enum)]
    tsm: Option<OnOff>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_size, default_value = "16x16")]
    size: (usize, usize),
    #[arg(long, default_value_t = 1000)]
    train_count: usize,
    #[arg(long, default_value_t = 200)]
    eval_count: usize,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    /// Output directory: log.csv, model/, checkpoints/epoch_N/.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Ascending square sizes.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 4)]
    d_state: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Fig6Args {
    #[arg(long, value_parser = parse_size, default_value = "5x5")]
    size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure of a numerical check, as opposed to bad input.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run_index(a: IndexArgs) -> Result<()> {
    let dirs = Direction::subset(a.directions)?;
    if a.height == 0 || a.width == 0 {
        bail!("height and width must be positive");
    }
    let s = ScanIndexSet::build(a.height, a.width, &dirs);
    create_dir(&a.out)?;
    tensor_save(&s.idx_tensor(), a.out.join("idx.oten"))?;
    tensor_save(&s.mask_tensor(), a.out.join("mask.oten"))?;
    let summary = a.out.join("summary.txt");
    std::fs::write(&summary, s.summary()).with_context(|| format!("writing {}", summary.display()))?;
    println!(
        "{} directions, n_max {}, l_max {} -> {}",
        s.num_directions(),
        s.n_max(),
        s.l_max(),
        a.out.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<Encoder> {
    if path.is_dir() {
        if path.join("manifest.txt").exists() {
            return Ok(Encoder::load(path)?);
        }
        let cfg = path.join("config.txt");
        let text = std::fs::read_to_string(&cfg).with_context(|| format!("reading {}", cfg.display()))?;
        return Ok(Encoder::new(EncoderConfig::parse(&text)?)?);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Encoder::new(EncoderConfig::parse(&text)?)?)
}

fn run_forward(a: ForwardArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let t = tensor_load(&a.input)?;
    let t = match t.rank() {
        4 => t,
        3 => {
            let shape = [1, t.shape()[0], t.shape()[1], t.shape()[2]].to_vec();
            t.reshape(shape)?
        }
        r => bail!("input must be (B, C, H, W) or (C, H, W), got rank {r}"),
    };
    let x = FeatureMap::new(t.with_dtype(DType::F64))?;
    let out = if a.logits {
        model.logits(&x)?
    } else {
        model.features(&x)?.0.into_tensor()
    };
    tensor_save(&out.clone().with_dtype(a.dtype.into()), &a.out)?;
    if let Some(dir) = &a.save_model {
        model.save(dir)?;
    }
    println!("output {:?} -> {}", out.shape(), a.out.display());
    Ok(())
}

fn run_oracle(a: OracleArgs) -> Result<()> {
    if a.len == 0 || a.trials == 0 || a.d_state == 0 {
        bail!("len, trials and d-state must be positive");
    }
    let mut rng = Rng::new(a.seed);
    let mut worst = 0.0f64;
    for _ in 0..a.trials {
        let p = SsmParams::init(1, a.d_state, 1, GateMode::ConstantOne, &mut rng);
        let dp = discretize(&p, DiscretizeOptions::default())?;
        let k = dp.kernel(0);
        let x = Tensor::new(vec![1, a.len], rng.normal_vec(a.len, 1.0))?;
        let y = scanline_recurrence(&k, &x, &vec![true; a.len])?;
        let m = semiseparable_matrix(&k, 0, a.len)?;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..a.len {
            let r: f64 = (0..a.len).map(|i| m.data()[j * a.len + i] * x.data()[i]).sum();
            num += (y.data()[j] - r).powi(2);
            den += r * r;
        }
        worst = worst.max(num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE));
    }
    let pass = worst <= a.tolerance;
    println!(
        "max relative error {worst:.3e} over {} trials (T = {}, N = {}): {}",
        a.trials,
        a.len,
        a.d_state,
        if pass { "PASS" } else { "FAIL" }
    );
    if !pass {
        return Err(CheckFailed(format!("error above tolerance {:e}", a.tolerance)).into());
    }
    Ok(())
}

fn run_operator(a: OperatorArgs) -> Result<()> {
    let (h, w) = a.size;
    if h * w > 1024 {
        bail!("dense operators are limited to 1024 pixels");
    }
    let mut rng = Rng::new(a.seed);
    let ssm = SsmParams::init(a.channels, a.d_state, 1, GateMode::ConstantOne, &mut rng);
    let attn = AttentionParams::init(a.channels, &mut rng);
    let index = Arc::new(octoscan::build_index_set(h, w));
    let weights = match a.weights {
        WeightsArg::Uniform => WeightMode::Uniform,
        WeightsArg::Learned => {
            // freeze the scorer's weights at a seeded random input
            let x = FeatureMap::from_vec(1, a.channels, h, w, rng.normal_vec(a.channels * h * w, 1.0))?;
            let (_, cache) = o_ss2d_forward(&x, &ssm, &attn, &index, &Ss2dOptions::default())?;
            WeightMode::Fixed(cache.weights().clone())
        }
    };
    let probe = Ss2dProbe {
        ssm,
        attn,
        index,
        opts: Ss2dOptions {
            weights,
            ..Default::default()
        },
    };
    let op = materialize_operator(&probe, a.channels, h, w)?;
    tensor_save(&op.tensor().clone().with_dtype(a.dtype.into()), &a.out)?;
    let expected = expected_support(h, w);
    let matches = (0..a.channels)
        .filter(|&c| support_pattern(&op, c, op.default_threshold()) == expected)
        .count();
    println!(
        "M {:?}, max |M| {:.4e}, support equals line membership in {matches}/{} channels -> {}",
        op.tensor().shape(),
        op.tensor().max_abs(),
        a.channels,
        a.out.display()
    );
    Ok(())
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn run_erf(a: ErfArgs) -> Result<()> {
    let (h, w) = a.size;
    let center = a.center.unwrap_or((h / 2, w / 2));
    let model = match &a.model {
        Some(p) => load_model(p)?,
        None => Encoder::new(EncoderConfig {
            seed: a.seed,
            ..Default::default()
        })?,
    };
    let c_in = model.config.in_channels;
    let mut rng = Rng::new(a.seed);
    let x = FeatureMap::from_vec(1, c_in, h, w, rng.normal_vec(c_in * h * w, 1.0))?;
    let e = erf(&EncoderProbe(&model), &x, center)?;
    let spatial = (e.height(), e.width());
    heatmap_save_pgm(&e.values, &a.out)?;
    tensor_save(&e.values, sibling(&a.out, "oten"))?;
    let mut rows = Vec::new();
    for i in 0..spatial.0 {
        for j in 0..spatial.1 {
            rows.push(vec![
                a.epoch_tag.clone(),
                i.to_string(),
                j.to_string(),
                format!("{:e}", e.values.get(&[i, j])),
            ]);
        }
    }
    write_csv(sibling(&a.out, "csv"), &["epoch_tag", "i", "j", "value"], &rows)?;
    match isotropy_score(&e) {
        Ok(s) => println!("erf [{}] center {center:?} isotropy {s:.4} -> {}", a.epoch_tag, a.out.display()),
        Err(_) => println!("erf [{}] center {center:?} has no off-center mass -> {}", a.epoch_tag, a.out.display()),
    }
    Ok(())
}

fn run_isotropy(a: IsotropyArgs) -> Result<()> {
    let values = tensor_load(&a.erf)?.with_dtype(DType::F64);
    if values.rank() != 2 {
        bail!("ERF tensor must be (H, W), got {:?}", values.shape());
    }
    if values.data().iter().any(|&v| v.is_nan() || v < 0.0) {
        bail!("ERF values must be non-negative");
    }
    let (h, w) = (values.shape()[0], values.shape()[1]);
    let center = a.center.unwrap_or((h / 2, w / 2));
    if center.0 >= h || center.1 >= w {
        bail!("center {center:?} outside a {h}x{w} map");
    }
    let e = ErfMap { values, center };
    let masses = spoke_masses(&e)?;
    let score = isotropy_score(&e)?;
    let m: Vec<String> = masses.iter().map(|m| format!("{m:.4}")).collect();
    println!("spoke masses [{}]", m.join(", "));
    println!("isotropy {score:.6}");
    Ok(())
}

fn run_toy_train(a: ToyTrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::parse(
            &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => TrainConfig::default(),
    };
    if let Some(d) = a.directions {
        Direction::subset(d)?;
        cfg.directions = d;
    }
    if let Some(t) = a.tsm {
        cfg.tsm = t == OnOff::On;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let (h, w) = a.size;
    let mk = |count, seed| {
        ToyDataset::generate(DatasetConfig {
            height: h,
            width: w,
            sigma: a.sigma,
            count,
            seed,
        })
    };
    let train = mk(a.train_count, cfg.seed.wrapping_mul(2).wrapping_add(1))?;
    let eval = mk(a.eval_count, cfg.seed.wrapping_mul(2).wrapping_add(2))?;
    let out = toy_train(&cfg, &train, &eval)?;
    create_dir(&a.out)?;
    out.log.save_csv(a.out.join("log.csv"))?;
    out.model.save(a.out.join("model"))?;
    for (epoch, m) in &out.checkpoints {
        m.save(a.out.join("checkpoints").join(format!("epoch_{epoch:03}")))?;
    }
    for r in &out.log.rows {
        println!(
            "epoch {:>3} loss {:.4} train {:.3} eval {:.3}",
            r.epoch, r.train_loss, r.train_acc, r.eval_acc
        );
    }
    let div = weight_divergence(&out.model, &eval, 64)?;
    println!(
        "final eval accuracy {:.3}, direction-weight divergence {div:.4} -> {}",
        out.log.final_eval_acc(),
        a.out.display()
    );
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<()> {
    let rows = bench_scaling(&a.sizes, a.reps, a.channels, a.d_state, a.seed)?;
    save_bench_csv(&rows, &a.out)?;
    for r in &rows {
        println!("hw {:>6}  median {:.3} ms", r.hw, r.median_seconds * 1e3);
    }
    Ok(())
}

fn run_fig6(a: Fig6Args) -> Result<()> {
    let out = repro_fig6(a.size.0, a.size.1, &a.out, a.seed)?;
    let expected = expected_support(a.size.0, a.size.1);
    for (name, support) in out.supports() {
        println!("{name}: {} nonzero entries", support.count());
    }
    let agg = &out.supports().last().ok_or_else(|| anyhow!("no aggregate"))?.1.clone();
    println!(
        "aggregate support {} line membership; {} files in {}",
        if *agg == expected { "equals" } else { "differs from" },
        out.files.len(),
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Index(a) => run_index(a),
        Command::Forward(a) => run_forward(a),
        Command::OracleCheck(a) => run_oracle(a),
        Command::Operator(a) => run_operator(a),
        Command::Erf(a) => run_erf(a),
        Command::Isotropy(a) => run_isotropy(a),
        Command::ToyTrain(a) => run_toy_train(a),
        Command::Bench(a) => run_bench(a),
        Command::ReproFig6(a) => run_fig6(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<CheckFailed>() => {
            eprintln!("check failed: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("16"), Ok((16, 16)));
        assert_eq!(parse_size("4x6"), Ok((4, 6)));
        assert_eq!(parse_size("4×6"), Ok((4, 6)));
        assert!(parse_size("0x4").is_err());
        assert!(parse_size("4x4x4").is_err());
        assert!(parse_size("ax4").is_err());
    }

    #[test]
    fn centers() {
        assert_eq!(parse_center("3,5"), Ok((3, 5)));
        assert!(parse_center("3").is_err());
        assert!(parse_center("3,-1").is_err());
    }

    #[test]
    fn command_line_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
