//! Wall-clock scaling of the O-SS2D forward pass.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::io::{read_csv, write_csv};
use crate::omodule::attention::AttentionParams;
use crate::omodule::ss2d::{o_ss2d, Ss2dOptions};
use crate::rng::Rng;
use crate::scanlines::build_index_set;
use crate::sscan::{GateMode, SsmParams};
use crate::tensor::FeatureMap;

pub const BENCH_HEADER: [&str; 2] = ["hw", "median_seconds"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub hw: usize,
    pub median_seconds: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median forward time at each square size `H = W = s`.
pub fn bench_scaling(sizes: &[usize], reps: usize, channels: usize, d_state: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if reps == 0 || sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::InvalidArgument("sizes must be positive and strictly ascending, reps positive".into()));
    }
    let mut rng = Rng::new(seed);
    let ssm = SsmParams::init(channels, d_state, 1, GateMode::AffineSigmoid, &mut rng);
    let attn = AttentionParams::init(channels, &mut rng);
    let opts = Ss2dOptions::default();
    let mut rows = Vec::new();
    for &s in sizes {
        let index = Arc::new(build_index_set(s, s));
        let x = FeatureMap::from_vec(1, channels, s, s, rng.normal_vec(channels * s * s, 1.0))?;
        // warm-up
        o_ss2d(&x, &ssm, &attn, &index, &opts)?;
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t = Instant::now();
            let y = o_ss2d(&x, &ssm, &attn, &index, &opts)?;
            times.push(t.elapsed().as_secs_f64());
            std::hint::black_box(y);
        }
        rows.push(BenchRow {
            hw: s * s,
            median_seconds: median(&mut times),
        });
    }
    Ok(rows)
}

pub fn save_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.hw.to_string(), format!("{:e}", r.median_seconds)])
        .collect();
    write_csv(path, &BENCH_HEADER, &body)
}

pub fn load_bench_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRow>> {
    let (header, rows) = read_csv(path)?;
    if header != BENCH_HEADER {
        return Err(Error::Config(format!("unexpected bench header {header:?}")));
    }
    Ok(rows
        .into_iter()
        .map(|r| BenchRow {
            hw: r[0] as usize,
            median_seconds: r[1],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn csv_roundtrip() {
        let rows = bench_scaling(&[2, 4], 3, 2, 2, 0).unwrap();
        assert_eq!(rows.iter().map(|r| r.hw).collect::<Vec<_>>(), vec![4, 16]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bench.csv");
        save_bench_csv(&rows, &p).unwrap();
        assert_eq!(load_bench_csv(&p).unwrap(), rows);
    }

    #[test]
    fn rejects_unsorted_sizes() {
        assert!(bench_scaling(&[4, 2], 1, 1, 1, 0).is_err());
    }
}
