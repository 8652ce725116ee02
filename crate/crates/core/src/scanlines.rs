//! The eight canonical traversal directions and their scan-lines, packed
//! into padded index/mask tables.
//!
//! Line ordinals:
//! - rows (`RowFwd`, `RowBwd`): ordinal `i`, one line per row;
//! - columns (`ColDown`, `ColUp`): ordinal `j`, one line per column;
//! - main diagonals (`DiagDR`, `DiagUL`): ordinal `i - j + W - 1`;
//! - anti-diagonals (`DiagDL`, `DiagUR`): ordinal `i + j`.
//!
//! Forward directions visit each line in increasing `i` (increasing `j` for
//! rows). Backward directions reverse every forward line in place and keep
//! its ordinal.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    RowFwd = 0,
    RowBwd = 1,
    ColDown = 2,
    ColUp = 3,
    DiagDR = 4,
    DiagUL = 5,
    DiagDL = 6,
    DiagUR = 7,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::RowFwd,
        Direction::RowBwd,
        Direction::ColDown,
        Direction::ColUp,
        Direction::DiagDR,
        Direction::DiagUL,
        Direction::DiagDL,
        Direction::DiagUR,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    /// Unit step `(di, dj)` between consecutive cells of a line.
    pub fn step(self) -> (isize, isize) {
        match self {
            Direction::RowFwd => (0, 1),
            Direction::RowBwd => (0, -1),
            Direction::ColDown => (1, 0),
            Direction::ColUp => (-1, 0),
            Direction::DiagDR => (1, 1),
            Direction::DiagUL => (-1, -1),
            Direction::DiagDL => (1, -1),
            Direction::DiagUR => (-1, 1),
        }
    }

    pub fn is_backward(self) -> bool {
        self.id() % 2 == 1
    }

    /// The direction traversing the same lines the other way.
    pub fn reverse(self) -> Self {
        Self::ALL[self.id() ^ 1]
    }

    /// Relabeling induced by swapping the spatial axes.
    pub fn transposed(self) -> Self {
        match self {
            Direction::RowFwd => Direction::ColDown,
            Direction::RowBwd => Direction::ColUp,
            Direction::ColDown => Direction::RowFwd,
            Direction::ColUp => Direction::RowBwd,
            Direction::DiagDR => Direction::DiagDR,
            Direction::DiagUL => Direction::DiagUL,
            Direction::DiagDL => Direction::DiagUR,
            Direction::DiagUR => Direction::DiagDL,
        }
    }

    /// Active set for a direction budget of 2 (rows), 4 (+ columns) or
    /// 8 (+ both diagonal families).
    pub fn subset(count: usize) -> Result<Vec<Direction>> {
        match count {
            2 | 4 | 8 => Ok(Self::ALL[..count].to_vec()),
            _ => Err(Error::InvalidArgument(format!(
                "direction count must be 2, 4 or 8, got {count}"
            ))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Direction::RowFwd => "row_fwd",
            Direction::RowBwd => "row_bwd",
            Direction::ColDown => "col_down",
            Direction::ColUp => "col_up",
            Direction::DiagDR => "diag_dr",
            Direction::DiagUL => "diag_ul",
            Direction::DiagDL => "diag_dl",
            Direction::DiagUR => "diag_ur",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanLine {
    pub direction: Direction,
    pub ordinal: usize,
    pub coords: Vec<(usize, usize)>,
}

impl ScanLine {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Linear index grid `grid[i][j] = i * W + j`.
pub fn build_grid(h: usize, w: usize) -> Tensor {
    assert!(h >= 1 && w >= 1, "grid must be non-empty");
    Tensor::new(vec![h, w], (0..h * w).map(|p| p as f64).collect()).unwrap()
}

fn forward_lines(h: usize, w: usize, d: Direction) -> Vec<Vec<(usize, usize)>> {
    match d {
        Direction::RowFwd | Direction::RowBwd => {
            (0..h).map(|i| (0..w).map(|j| (i, j)).collect()).collect()
        }
        Direction::ColDown | Direction::ColUp => {
            (0..w).map(|j| (0..h).map(|i| (i, j)).collect()).collect()
        }
        Direction::DiagDR | Direction::DiagUL => (0..h + w - 1)
            .map(|o| {
                // i - j = o - (W - 1)
                (0..h)
                    .filter_map(|i| {
                        let j = i as isize - o as isize + w as isize - 1;
                        (0..w as isize).contains(&j).then_some((i, j as usize))
                    })
                    .collect()
            })
            .collect(),
        Direction::DiagDL | Direction::DiagUR => (0..h + w - 1)
            .map(|s| {
                (0..h)
                    .filter(|&i| s >= i && s - i < w).map(|i| (i, s - i))
                    .collect()
            })
            .collect(),
    }
}

pub fn enumerate_scanlines(h: usize, w: usize, d: Direction) -> Vec<ScanLine> {
    assert!(h >= 1 && w >= 1, "grid must be non-empty");
    forward_lines(h, w, d)
        .into_iter()
        .enumerate()
        .map(|(ordinal, mut coords)| {
            if d.is_backward() {
                coords.reverse();
            }
            ScanLine {
                direction: d,
                ordinal,
                coords,
            }
        })
        .collect()
}

/// Padded scan-line tables for a set of directions on an `H x W` grid.
///
/// `idx` has logical shape `(D, n_max, L_max)`; each line is packed left
/// aligned and padded with `-1`. `mask` is true exactly where `idx >= 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanIndexSet {
    height: usize,
    width: usize,
    directions: Vec<Direction>,
    n_max: usize,
    l_max: usize,
    line_counts: Vec<usize>,
    line_lens: Vec<usize>,
    idx: Vec<i64>,
    mask: Vec<bool>,
}

pub fn build_index_set(h: usize, w: usize) -> ScanIndexSet {
    ScanIndexSet::build(h, w, &Direction::ALL)
}

impl ScanIndexSet {
    pub fn build(h: usize, w: usize, directions: &[Direction]) -> Self {
        assert!(!directions.is_empty(), "at least one direction required");
        let per_dir: Vec<Vec<ScanLine>> = directions
            .iter()
            .map(|&d| enumerate_scanlines(h, w, d))
            .collect();
        let n_max = per_dir.iter().map(Vec::len).max().unwrap();
        let l_max = per_dir.iter().flatten().map(ScanLine::len).max().unwrap();
        let d_count = directions.len();
        let mut idx = vec![-1i64; d_count * n_max * l_max];
        let mut mask = vec![false; idx.len()];
        let mut line_lens = vec![0; d_count * n_max];
        for (k, lines) in per_dir.iter().enumerate() {
            for (l, line) in lines.iter().enumerate() {
                let base = (k * n_max + l) * l_max;
                for (t, &(i, j)) in line.coords.iter().enumerate() {
                    idx[base + t] = (i * w + j) as i64;
                    mask[base + t] = true;
                }
                line_lens[k * n_max + l] = line.len();
            }
        }
        Self {
            height: h,
            width: w,
            directions: directions.to_vec(),
            n_max,
            l_max,
            line_counts: per_dir.iter().map(Vec::len).collect(),
            line_lens,
            idx,
            mask,
        }
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

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn num_directions(&self) -> usize {
        self.directions.len()
    }

    /// Position of `d` in this set's direction axis.
    pub fn position(&self, d: Direction) -> Option<usize> {
        self.directions.iter().position(|&x| x == d)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn line_count(&self, k: usize) -> usize {
        self.line_counts[k]
    }

    pub fn line_counts(&self) -> &[usize] {
        &self.line_counts
    }

    /// Valid length of line `l` in direction slot `k` (0 for padding lines).
    pub fn line_len(&self, k: usize, l: usize) -> usize {
        self.line_lens[k * self.n_max + l]
    }

    /// The valid prefix of line `l` in slot `k`, as linear pixel indices.
    pub fn line(&self, k: usize, l: usize) -> &[i64] {
        let base = (k * self.n_max + l) * self.l_max;
        &self.idx[base..base + self.line_len(k, l)]
    }

    pub fn idx(&self) -> &[i64] {
        &self.idx
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn idx_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.num_directions(), self.n_max, self.l_max],
            self.idx.iter().map(|&v| v as f64).collect(),
        )
        .unwrap()
    }

    pub fn mask_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.num_directions(), self.n_max, self.l_max],
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap()
    }

    /// Reorders the lines of slot `k`: new line `l` is old line `perm[l]`.
    pub fn permute_lines(&self, k: usize, perm: &[usize]) -> Result<Self> {
        let n = self.line_counts[k];
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument(format!(
                "not a permutation of {n} lines: {perm:?}"
            )));
        }
        let mut out = self.clone();
        for (l, &src) in perm.iter().enumerate() {
            let dst = (k * self.n_max + l) * self.l_max;
            let from = (k * self.n_max + src) * self.l_max;
            out.idx[dst..dst + self.l_max].copy_from_slice(&self.idx[from..from + self.l_max]);
            out.mask[dst..dst + self.l_max].copy_from_slice(&self.mask[from..from + self.l_max]);
            out.line_lens[k * self.n_max + l] = self.line_lens[k * self.n_max + src];
        }
        Ok(out)
    }

    /// Human-readable listing: one line per scan-line with direction,
    /// ordinal and coordinates.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "H={} W={} directions={} n_max={} L_max={}\n",
            self.height,
            self.width,
            self.num_directions(),
            self.n_max,
            self.l_max
        );
        for (k, d) in self.directions.iter().enumerate() {
            for l in 0..self.line_counts[k] {
                let coords: Vec<String> = self
                    .line(k, l)
                    .iter()
                    .map(|&p| format!("({},{})", p as usize / self.width, p as usize % self.width))
                    .collect();
                out.push_str(&format!("{d} {l} {}\n", coords.join(" ")));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coords(lines: &[ScanLine]) -> Vec<Vec<(usize, usize)>> {
        lines.iter().map(|l| l.coords.clone()).collect()
    }

    #[test]
    fn grid_examples() {
        assert_eq!(build_grid(1, 1).data(), &[0.0]);
        assert_eq!(build_grid(2, 2).data(), &[0., 1., 2., 3.]);
        assert_eq!(build_grid(2, 3).data(), &[0., 1., 2., 3., 4., 5.]);
    }

    #[test]
    fn diag_dr_on_3x3() {
        let lines = enumerate_scanlines(3, 3, Direction::DiagDR);
        assert_eq!(
            coords(&lines),
            vec![
                vec![(0, 2)],
                vec![(0, 1), (1, 2)],
                vec![(0, 0), (1, 1), (2, 2)],
                vec![(1, 0), (2, 1)],
                vec![(2, 0)],
            ]
        );
        for (o, l) in lines.iter().enumerate() {
            assert_eq!(l.ordinal, o);
        }
    }

    #[test]
    fn row_bwd_on_2x2() {
        let lines = enumerate_scanlines(2, 2, Direction::RowBwd);
        assert_eq!(coords(&lines), vec![vec![(0, 1), (0, 0)], vec![(1, 1), (1, 0)]]);
    }

    #[test]
    fn diag_dl_ordinal_is_anti_diagonal_sum() {
        for l in enumerate_scanlines(3, 4, Direction::DiagDL) {
            assert!(l.coords.iter().all(|&(i, j)| i + j == l.ordinal));
            assert!(l.coords.windows(2).all(|w| w[1].0 == w[0].0 + 1));
        }
    }

    #[test]
    fn line_counts_brute_force_up_to_8x8() {
        for h in 1..=8 {
            for w in 1..=8 {
                for d in Direction::ALL {
                    let lines = enumerate_scanlines(h, w, d);
                    let expected = match d.id() / 2 {
                        0 => h,
                        1 => w,
                        _ => h + w - 1,
                    };
                    assert_eq!(lines.len(), expected, "{d} {h}x{w}");
                    assert_eq!(lines.iter().map(ScanLine::len).sum::<usize>(), h * w);
                    assert!(lines.iter().all(|l| !l.is_empty()));
                }
            }
        }
    }

    #[test]
    fn single_cell_index_set() {
        let s = build_index_set(1, 1);
        assert_eq!((s.num_directions(), s.n_max(), s.l_max()), (8, 1, 1));
        assert_eq!(s.idx(), &[0; 8]);
        assert!(s.mask().iter().all(|&m| m));
    }

    #[test]
    fn two_by_two_index_set() {
        let s = build_index_set(2, 2);
        assert_eq!((s.n_max(), s.l_max()), (3, 2));
        let k = Direction::DiagDR.id();
        let plane = &s.idx()[k * 6..(k + 1) * 6];
        assert_eq!(plane, &[1, -1, 0, 3, 2, -1]);
        // rows have only two lines; the third is pure padding
        let rows = &s.idx()[..6];
        assert_eq!(rows, &[0, 1, 2, 3, -1, -1]);
        assert_eq!(s.line_count(0), 2);
    }

    #[test]
    fn subsets() {
        assert_eq!(Direction::subset(2).unwrap(), vec![Direction::RowFwd, Direction::RowBwd]);
        assert_eq!(Direction::subset(4).unwrap().len(), 4);
        assert!(Direction::subset(3).is_err());
        let s = ScanIndexSet::build(3, 5, &Direction::subset(2).unwrap());
        assert_eq!((s.n_max(), s.l_max()), (3, 5));
    }

    #[test]
    fn permute_lines_rejects_non_permutations() {
        let s = build_index_set(2, 3);
        assert!(s.permute_lines(0, &[0, 0]).is_err());
        assert!(s.permute_lines(0, &[1]).is_err());
        let p = s.permute_lines(0, &[1, 0]).unwrap();
        assert_eq!(p.line(0, 0), s.line(0, 1));
    }

    #[test]
    fn summary_lists_every_line() {
        let s = build_index_set(2, 2);
        let text = s.summary();
        let body = text.lines().count() - 1;
        assert_eq!(body, s.line_counts().iter().sum::<usize>());
        assert!(text.contains("diag_dr 1 (0,0) (1,1)"));
    }

    proptest! {
        #[test]
        fn coverage_and_uniqueness(h in 1usize..=16, w in 1usize..=16) {
            let s = build_index_set(h, w);
            let per = s.n_max() * s.l_max();
            for k in 0..8 {
                let plane = &s.idx()[k * per..(k + 1) * per];
                let mplane = &s.mask()[k * per..(k + 1) * per];
                let mut valid: Vec<i64> = plane.iter().copied().filter(|&v| v >= 0).collect();
                prop_assert_eq!(mplane.iter().filter(|&&m| m).count(), h * w);
                valid.sort_unstable();
                prop_assert_eq!(valid, (0..(h * w) as i64).collect::<Vec<_>>());
                for (&v, &m) in plane.iter().zip(mplane) {
                    prop_assert_eq!(m, v >= 0);
                }
            }
        }

        #[test]
        fn left_aligned_padding(h in 1usize..=10, w in 1usize..=10) {
            let s = build_index_set(h, w);
            for k in 0..8 {
                for l in 0..s.n_max() {
                    let base = (k * s.n_max() + l) * s.l_max();
                    let row = &s.mask()[base..base + s.l_max()];
                    let len = s.line_len(k, l);
                    prop_assert!(row[..len].iter().all(|&m| m));
                    prop_assert!(row[len..].iter().all(|&m| !m));
                }
            }
        }

        #[test]
        fn reversal_duality(h in 1usize..=10, w in 1usize..=10) {
            let s = build_index_set(h, w);
            for fwd in (0..8).step_by(2) {
                prop_assert_eq!(s.line_count(fwd), s.line_count(fwd + 1));
                for l in 0..s.n_max() {
                    let mut f = s.line(fwd, l).to_vec();
                    f.reverse();
                    prop_assert_eq!(f.as_slice(), s.line(fwd + 1, l));
                    prop_assert_eq!(s.line_len(fwd, l), s.line_len(fwd + 1, l));
                }
            }
        }

        #[test]
        fn step_consistency(h in 1usize..=10, w in 1usize..=10) {
            let s = build_index_set(h, w);
            for (k, d) in s.directions().iter().enumerate() {
                let (di, dj) = d.step();
                for l in 0..s.line_count(k) {
                    for pair in s.line(k, l).windows(2) {
                        let (a, b) = (pair[0] as usize, pair[1] as usize);
                        prop_assert_eq!((b / w) as isize - (a / w) as isize, di);
                        prop_assert_eq!((b % w) as isize - (a % w) as isize, dj);
                    }
                }
            }
        }

        #[test]
        fn transpose_duality(h in 1usize..=10, w in 1usize..=10) {
            let s = build_index_set(h, w);
            let t = build_index_set(w, h);
            let (row, col) = (Direction::RowFwd.id(), Direction::ColDown.id());
            prop_assert_eq!(t.line_count(col), s.line_count(row));
            for l in 0..s.line_count(row) {
                // t is a w x h grid: linear index i * h + j maps to (j, i) here
                let transposed: Vec<i64> = t.line(col, l).iter()
                    .map(|&p| ((p as usize % h) * w + p as usize / h) as i64)
                    .collect();
                prop_assert_eq!(transposed.as_slice(), s.line(row, l));
            }
        }

        #[test]
        fn diagonal_families(h in 1usize..=12, w in 1usize..=12) {
            let s = build_index_set(h, w);
            for k in 4..8 {
                prop_assert_eq!(s.line_count(k), h + w - 1);
                let total: usize = (0..s.line_count(k)).map(|l| s.line_len(k, l)).sum();
                prop_assert_eq!(total, h * w);
            }
        }
    }
}
