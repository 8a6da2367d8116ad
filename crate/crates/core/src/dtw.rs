//! Dynamic time warping.
//!
//! `D(i, j) = d(i, j) + min(D(i-1, j), D(i, j-1), D(i-1, j-1))` with
//! `D(0, 0) = d(0, 0)` and the first row and column accumulated. Indices are
//! zero-based throughout. When only the distance is needed the table is
//! reduced to a single rolling row (two when a band is set).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::CycleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalCost {
    /// `|x_i − y_j|`
    #[default]
    Absolute,
    /// `(x_i − y_j)²`
    Squared,
}

impl LocalCost {
    #[inline]
    fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            LocalCost::Absolute => (a - b).abs(),
            LocalCost::Squared => (a - b) * (a - b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwOptions {
    pub cost: LocalCost,
    /// Sakoe–Chiba half-width around the (scaled) diagonal; `None` is unconstrained.
    pub band: Option<usize>,
}

impl DtwOptions {
    #[inline]
    fn allowed(&self, i: usize, j: usize, n: usize, m: usize) -> bool {
        match self.band {
            None => true,
            Some(w) => {
                let diag = if n > 1 && m > 1 {
                    j as f64 * (n - 1) as f64 / (m - 1) as f64
                } else {
                    i as f64
                };
                (i as f64 - diag).abs() <= w as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub distance: f64,
    /// Matched index pairs from `(0, 0)` to `(|x|-1, |y|-1)`.
    pub path: Vec<(usize, usize)>,
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain("DTW needs two non-empty sequences"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("DTW sequences must be finite"));
    }
    Ok(())
}

/// Full accumulated-cost table, row-major `|x| × |y|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostTable {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// One CSV line per `x` index; unreachable cells (outside a band) are `inf`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.rows {
            let line: Vec<String> = (0..self.cols).map(|j| format!("{}", self.at(i, j))).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub fn cost_table(x: &[f64], y: &[f64], opts: &DtwOptions) -> Result<CostTable> {
    check(x, y)?;
    let (n, m) = (x.len(), y.len());
    let mut d = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            if !opts.allowed(i, j, n, m) {
                continue;
            }
            let local = opts.cost.eval(x[i], y[j]);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => d[j - 1],
                (_, 0) => d[(i - 1) * m],
                _ => d[(i - 1) * m + j].min(d[i * m + j - 1]).min(d[(i - 1) * m + j - 1]),
            };
            d[i * m + j] = local + best;
        }
    }
    Ok(CostTable {
        rows: n,
        cols: m,
        data: d,
    })
}

/// Distance and warping path with absolute local cost and no band.
pub fn dtw_distance(x: &[f64], y: &[f64]) -> Result<DtwResult> {
    dtw_with(x, y, &DtwOptions::default())
}

/// Distance and path. Backtracking prefers the diagonal move on ties, then
/// `(i-1, j)`, then `(i, j-1)`.
pub fn dtw_with(x: &[f64], y: &[f64], opts: &DtwOptions) -> Result<DtwResult> {
    let t = cost_table(x, y, opts)?;
    let (n, m) = (t.rows, t.cols);
    let distance = t.at(n - 1, m - 1);
    if !distance.is_finite() {
        return Err(Error::domain("band too narrow: no admissible warping path"));
    }
    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((i, j));
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = t.at(i - 1, j - 1);
            let up = t.at(i - 1, j);
            let left = t.at(i, j - 1);
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwResult { distance, path })
}

/// Distance only, keeping one row of `|y|` cells (two with a band).
pub fn dtw_cost(x: &[f64], y: &[f64], opts: &DtwOptions) -> Result<f64> {
    check(x, y)?;
    if opts.band.is_none() {
        return Ok(match opts.cost {
            LocalCost::Absolute => unbanded(x, y, |a, b| (a - b).abs()),
            LocalCost::Squared => unbanded(x, y, |a, b| (a - b) * (a - b)),
        });
    }
    let (n, m) = (x.len(), y.len());
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            if !opts.allowed(i, j, n, m) {
                cur[j] = f64::INFINITY;
                continue;
            }
            let local = opts.cost.eval(x[i], y[j]);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = local + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[m - 1];
    if !d.is_finite() {
        return Err(Error::domain("band too narrow: no admissible warping path"));
    }
    Ok(d)
}

/// NaN-oblivious minimum; compiles to a single instruction, unlike `f64::min`.
#[inline(always)]
fn min2(a: f64, b: f64) -> f64 {
    if a < b {
        a
    } else {
        b
    }
}

/// Same recurrence without band checks; the hot loop of the k-NN baseline.
#[inline]
fn unbanded(x: &[f64], y: &[f64], cost: impl Fn(f64, f64) -> f64) -> f64 {
    let mut row: Vec<f64> = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    for &b in y {
        acc += cost(x[0], b);
        row.push(acc);
    }
    for &a in &x[1..] {
        let mut diag = row[0];
        let mut left = diag + cost(a, y[0]);
        row[0] = left;
        for (cell, &b) in row[1..].iter_mut().zip(&y[1..]) {
            let up = *cell;
            left = cost(a, b) + min2(min2(up, diag), left);
            diag = up;
            *cell = left;
        }
    }
    row[y.len() - 1]
}

/// Bytes of unbanded DP state: the full table when a path is needed, one row otherwise.
pub fn table_bytes(n: usize, m: usize, with_path: bool) -> usize {
    let cells = if with_path { n * m } else { m };
    cells * std::mem::size_of::<f64>()
}

/// DTW distances between the three post-event and three pre-event cycles,
/// ordered (post j+1, j+10, j+20) × (pre j, j−10, j−20).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DtwSignature(pub [f64; 9]);

impl DtwSignature {
    pub fn values(&self) -> &[f64; 9] {
        &self.0
    }
}

pub fn dtw_signature(cs: &CycleSet) -> Result<DtwSignature> {
    dtw_signature_with(cs, &DtwOptions::default())
}

pub fn dtw_signature_with(cs: &CycleSet, opts: &DtwOptions) -> Result<DtwSignature> {
    let mut out = [0.0; 9];
    for (a, post) in cs.post().iter().enumerate() {
        for (b, pre) in cs.pre().iter().enumerate() {
            out[a * 3 + b] = dtw_cost(post, pre, opts)?;
        }
    }
    Ok(DtwSignature(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum over every monotone warping path, by exhaustive recursion.
    fn brute_force(x: &[i64], y: &[i64]) -> i64 {
        fn go(x: &[i64], y: &[i64], i: usize, j: usize) -> i64 {
            let here = (x[i] - y[j]).abs();
            if i + 1 == x.len() && j + 1 == y.len() {
                return here;
            }
            let mut best = i64::MAX;
            if i + 1 < x.len() {
                best = best.min(go(x, y, i + 1, j));
            }
            if j + 1 < y.len() {
                best = best.min(go(x, y, i, j + 1));
            }
            if i + 1 < x.len() && j + 1 < y.len() {
                best = best.min(go(x, y, i + 1, j + 1));
            }
            here + best
        }
        go(x, y, 0, 0)
    }

    fn as_f64(v: &[i64]) -> Vec<f64> {
        v.iter().map(|&x| x as f64).collect()
    }

    #[test]
    fn spec_examples() {
        let r = dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(dtw_distance(&[0.0], &[5.0]).unwrap().distance, 5.0);
        assert_eq!(brute_force(&[1, 2, 3], &[1, 2, 2, 3]), 0);
        let r = dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn empty_is_domain_error() {
        assert!(matches!(dtw_distance(&[], &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(
            dtw_cost(&[1.0], &[], &DtwOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tie_break_prefers_vertical_over_horizontal() {
        // both off-diagonal predecessors of (1,1) cost the same
        let r = dtw_distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.path, vec![(0, 0), (1, 1)]);
        let r = dtw_distance(&[0.0, 1.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 1)]);
    }

    #[test]
    fn band_limits_paths() {
        let x = [0.0, 0.0, 0.0, 5.0];
        let y = [5.0, 0.0, 0.0, 0.0];
        let free = dtw_distance(&x, &y).unwrap().distance;
        let banded = dtw_with(
            &x,
            &y,
            &DtwOptions {
                band: Some(0),
                ..Default::default()
            },
        )
        .unwrap()
        .distance;
        assert_eq!(banded, 10.0);
        assert!(free <= banded);
        let sq = dtw_cost(
            &[0.0, 2.0],
            &[0.0, 0.0],
            &DtwOptions {
                cost: LocalCost::Squared,
                band: None,
            },
        )
        .unwrap();
        assert_eq!(sq, 4.0);
    }

    #[test]
    fn dp_table_csv() {
        let t = cost_table(&[0.0, 1.0], &[0.0, 2.0], &DtwOptions::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,2\n1,1\n");
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            x in prop::collection::vec(0i64..5, 1..=6),
            y in prop::collection::vec(0i64..5, 1..=6),
        ) {
            let want = brute_force(&x, &y);
            let r = dtw_distance(&as_f64(&x), &as_f64(&y)).unwrap();
            prop_assert_eq!(r.distance, want as f64);
            prop_assert_eq!(dtw_cost(&as_f64(&x), &as_f64(&y), &DtwOptions::default()).unwrap(), want as f64);
            let path_sum: i64 = r.path.iter().map(|&(i, j)| (x[i] - y[j]).abs()).sum();
            prop_assert_eq!(path_sum, want);
        }

        #[test]
        fn path_is_monotone_and_contiguous(
            x in prop::collection::vec(-10.0f64..10.0, 1..20),
            y in prop::collection::vec(-10.0f64..10.0, 1..20),
        ) {
            let r = dtw_distance(&x, &y).unwrap();
            prop_assert_eq!(r.path[0], (0, 0));
            prop_assert_eq!(*r.path.last().unwrap(), (x.len() - 1, y.len() - 1));
            for w in r.path.windows(2) {
                let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                prop_assert!((di, dj) == (1, 0) || (di, dj) == (0, 1) || (di, dj) == (1, 1));
            }
        }

        #[test]
        fn symmetric_and_bounded(
            pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40),
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let a = dtw_distance(&x, &y).unwrap().distance;
            let b = dtw_distance(&y, &x).unwrap().distance;
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-12);
            let lockstep: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum();
            prop_assert!(a <= lockstep + 1e-12);
        }

        #[test]
        fn repeating_elements_costs_nothing(
            x in prop::collection::vec(-5.0f64..5.0, 1..20),
            r in 1usize..5,
        ) {
            let stretched: Vec<f64> = x.iter().flat_map(|&v| std::iter::repeat_n(v, r)).collect();
            prop_assert_eq!(dtw_distance(&x, &stretched).unwrap().distance, 0.0);
        }
    }
}
