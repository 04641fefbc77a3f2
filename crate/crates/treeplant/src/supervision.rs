//! Attention supervision targets: each causal prefix row is the softmax of
//! negative syntactic distances from the word being predicted.

use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

/// Row-stochastic lower-triangular supervision matrix over `n` words.
///
/// Row `r` (0-based, `0 <= r < n-1`) is the target attention distribution
/// used when predicting word `r+1`; it has support on columns `0..=r` and
/// each stored row spans the full width `n` with zeros beyond column `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionMatrix {
    pub n: usize,
    pub s: Vec<Vec<f64>>,
}

impl SupervisionMatrix {
    pub fn rows(&self) -> usize {
        self.n - 1
    }
}

/// Converts a distance matrix into supervision targets:
/// `s[r][j] = exp(-D[r+1][j]) / sum_{k<=r} exp(-D[r+1][k])`.
///
/// Computed with min-distance subtraction so rows stay normalized even for
/// very large distances.
pub fn supervision_matrix(dist: &DistanceMatrix) -> Result<SupervisionMatrix> {
    let n = dist.n;
    if n < 2 {
        return Err(Error::Config(format!(
            "supervision needs at least 2 words, got {n}"
        )));
    }
    let mut s = Vec::with_capacity(n - 1);
    for r in 0..n - 1 {
        let target = r + 1;
        let mut row = supervision_row(&dist.d[target][..=r]);
        row.resize(n, 0.0);
        s.push(row);
    }
    Ok(SupervisionMatrix { n, s })
}

/// Softmax of negated distances over one causal prefix. `dists[j]` is the
/// distance from the predicted word to context word `j`.
pub fn supervision_row(dists: &[u32]) -> Vec<f64> {
    debug_assert!(!dists.is_empty());
    let min = *dists.iter().min().expect("non-empty prefix");
    let weights: Vec<f64> = dists.iter().map(|&d| (-f64::from(d - min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}
