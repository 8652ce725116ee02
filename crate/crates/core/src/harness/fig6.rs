//! Operator heatmaps for each bidirectional direction pair and their
//! aggregate.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::analysis::{materialize_operator, support_pattern, EffectiveOperator, Ss2dProbe, SupportPattern};
use crate::error::{Error, Result};
use crate::io::{heatmap_save_pgm, tensor_save};
use crate::omodule::attention::AttentionParams;
use crate::omodule::ss2d::{Ss2dOptions, WeightMode};
use crate::rng::Rng;
use crate::scanlines::{build_index_set, Direction};
use crate::sscan::{GateMode, SsmParams};
use crate::tensor::Tensor;

pub const MAX_PIXELS: usize = 400;

/// `(file stem, direction pair)` for the four line families.
pub const PAIRS: [(&str, [Direction; 2]); 4] = [
    ("row_pair", [Direction::RowFwd, Direction::RowBwd]),
    ("col_pair", [Direction::ColDown, Direction::ColUp]),
    ("diag_dr_pair", [Direction::DiagDR, Direction::DiagUL]),
    ("diag_dl_pair", [Direction::DiagDL, Direction::DiagUR]),
];

#[derive(Debug, Clone)]
pub struct Fig6Output {
    /// Pair operators in [`PAIRS`] order followed by the aggregate.
    pub operators: Vec<(String, EffectiveOperator)>,
    pub files: Vec<PathBuf>,
}

impl Fig6Output {
    pub fn supports(&self) -> Vec<(String, SupportPattern)> {
        self.operators
            .iter()
            .map(|(n, op)| (n.clone(), support_pattern(op, 0, op.default_threshold())))
            .collect()
    }
}

fn abs_matrix(op: &EffectiveOperator) -> Tensor {
    let m = op.channel(0);
    Tensor::new(m.shape().to_vec(), m.data().iter().map(|v| v.abs()).collect()).unwrap()
}

/// Materializes one single-channel O-SS2D (gate one, shared parameters)
/// under pairwise and uniform weights and writes `|M|` heatmaps plus raw
/// operators.
pub fn repro_fig6(h: usize, w: usize, out_dir: impl AsRef<Path>, seed: u64) -> Result<Fig6Output> {
    if h * w > MAX_PIXELS || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "dense operators are limited to {MAX_PIXELS} pixels, got {h}x{w}"
        )));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = Rng::new(seed);
    let ssm = SsmParams::init(1, 4, 1, GateMode::ConstantOne, &mut rng);
    let attn = AttentionParams::init(1, &mut rng);
    let index = Arc::new(build_index_set(h, w));
    let mut modes: Vec<(String, WeightMode)> = PAIRS
        .iter()
        .map(|(name, pair)| (name.to_string(), WeightMode::Subset(pair.to_vec())))
        .collect();
    modes.push(("aggregate".to_string(), WeightMode::Uniform));
    let mut operators = Vec::new();
    let mut files = Vec::new();
    for (name, weights) in modes {
        let probe = Ss2dProbe {
            ssm: ssm.clone(),
            attn: attn.clone(),
            index: index.clone(),
            opts: Ss2dOptions {
                weights,
                ..Default::default()
            },
        };
        let op = materialize_operator(&probe, 1, h, w)?;
        let pgm = out_dir.join(format!("{name}.pgm"));
        heatmap_save_pgm(&abs_matrix(&op), &pgm)?;
        let raw = out_dir.join(format!("{name}.oten"));
        tensor_save(&op.channel(0), &raw)?;
        files.push(pgm);
        files.push(raw);
        operators.push((name, op));
    }
    Ok(Fig6Output { operators, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{expected_support, line_membership};

    #[test]
    fn pair_and_aggregate_supports() {
        let dir = tempfile::tempdir().unwrap();
        let out = repro_fig6(4, 5, dir.path(), 1).unwrap();
        let supports = out.supports();
        for ((_, pair), (_, s)) in PAIRS.iter().zip(&supports) {
            assert_eq!(*s, line_membership(4, 5, pair));
        }
        assert_eq!(supports[4].1, expected_support(4, 5));
        let bytes = std::fs::read(dir.path().join("aggregate.pgm")).unwrap();
        assert!(bytes.starts_with(b"P5\n20 20\n255\n"));
    }

    #[test]
    fn size_cap() {
        let dir = tempfile::tempdir().unwrap();
        assert!(repro_fig6(21, 20, dir.path(), 0).is_err());
    }
}
