//! Word-level attention aggregation, the tree-planting KL loss, and the
//! composite training objective, with the matching gradient computations.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::supervision::SupervisionMatrix;
use crate::tokenizer::WordAlignment;

/// Floor applied to word-attention entries inside the KL so a (near-)zero
/// model weight under positive supervision stays finite.
pub const KL_EPS: f64 = 1e-12;

/// Word-level attention aggregated from subword weights. Row `r` is the
/// distribution over context words `0..=r` used when predicting word `r+1`;
/// rows span the full word count with zeros beyond column `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordAttention {
    pub n: usize,
    pub w: Vec<Vec<f64>>,
}

impl WordAttention {
    pub fn rows(&self) -> usize {
        self.n - 1
    }
}

/// Per-batch loss components: mean next-token cross-entropy (nats),
/// per-head tree losses, and the weighted total.
#[derive(Debug, Clone, Serialize)]
pub struct LossBreakdown {
    pub nwp: f64,
    pub tree: Vec<f64>,
    pub total: f64,
}

/// Sums subword attention over word spans and renormalizes each causal
/// prefix row:
/// `c[r][j] = sum of a[l][m] for l in span(word r+1), m in span(word j)`,
/// `w[r][j] = c[r][j] / sum_{k<=r} c[r][k]`.
pub fn aggregate_word_attention(
    attn: &Array2<f64>,
    align: &WordAlignment,
) -> Result<WordAttention> {
    let n = align.words();
    if n < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 aligned words, got {n}"
        )));
    }
    if align.subwords() != attn.nrows() || attn.nrows() != attn.ncols() {
        return Err(Error::Shape(format!(
            "alignment covers {} subwords but attention is {:?}",
            align.subwords(),
            attn.dim()
        )));
    }
    let mut w = Vec::with_capacity(n - 1);
    for r in 0..n - 1 {
        let (tstart, tend) = align.spans[r + 1];
        let mut row = vec![0.0; n];
        let mut z = 0.0;
        for (j, cell) in row.iter_mut().enumerate().take(r + 1) {
            let (cstart, cend) = align.spans[j];
            let mut c = 0.0;
            for l in tstart..=tend {
                for m in cstart..=cend {
                    c += attn[[l, m]];
                }
            }
            *cell = c;
            z += c;
        }
        if z <= 0.0 {
            return Err(Error::Data(format!(
                "row {r} has no attention mass on its prefix"
            )));
        }
        for cell in row.iter_mut().take(r + 1) {
            *cell /= z;
        }
        w.push(row);
    }
    Ok(WordAttention { n, w })
}

/// Gradient of a scalar loss w.r.t. the subword attention entries, given
/// the gradient w.r.t. the aggregated rows. Inverts the span-sum and
/// renormalization of [`aggregate_word_attention`].
pub fn aggregate_word_attention_backward(
    attn: &Array2<f64>,
    align: &WordAlignment,
    word_attn: &WordAttention,
    dw: &[Vec<f64>],
) -> Result<Array2<f64>> {
    let n = align.words();
    if dw.len() != n - 1 {
        return Err(Error::Shape(format!(
            "{} gradient rows for {} word rows",
            dw.len(),
            n - 1
        )));
    }
    let mut da = Array2::zeros(attn.raw_dim());
    for r in 0..n - 1 {
        let (tstart, tend) = align.spans[r + 1];
        // Recover the row normalizer Z = sum of C over the prefix.
        let mut z = 0.0;
        for j in 0..=r {
            let (cstart, cend) = align.spans[j];
            for l in tstart..=tend {
                for m in cstart..=cend {
                    z += attn[[l, m]];
                }
            }
        }
        let wrow = &word_attn.w[r];
        let dot: f64 = (0..=r).map(|j| dw[r][j] * wrow[j]).sum();
        for j in 0..=r {
            let dc = (dw[r][j] - dot) / z;
            let (cstart, cend) = align.spans[j];
            for l in tstart..=tend {
                for m in cstart..=cend {
                    da[[l, m]] += dc;
                }
            }
        }
    }
    Ok(da)
}

/// Per-row KL divergence `KL(S_r || W_r)`, with zero-supervision terms
/// contributing nothing and `w` floored at [`KL_EPS`].
pub fn kl_divergence_rows(
    sup: &SupervisionMatrix,
    word_attn: &WordAttention,
) -> Result<Vec<f64>> {
    if sup.n != word_attn.n {
        return Err(Error::Shape(format!(
            "supervision over {} words, attention over {}",
            sup.n, word_attn.n
        )));
    }
    Ok((0..sup.rows())
        .map(|r| {
            (0..=r)
                .map(|j| {
                    let p = sup.s[r][j];
                    if p > 0.0 {
                        p * (p / word_attn.w[r][j].max(KL_EPS)).ln()
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect())
}

/// Average of [`kl_divergence_rows`] over the prediction rows.
pub fn tree_planting_loss(sup: &SupervisionMatrix, word_attn: &WordAttention) -> Result<f64> {
    let rows = kl_divergence_rows(sup, word_attn)?;
    Ok(rows.iter().sum::<f64>() / rows.len() as f64)
}

/// Gradient of [`tree_planting_loss`] w.r.t. the word-attention rows,
/// scaled by `upstream`. Entries floored by [`KL_EPS`] get zero gradient,
/// matching the clamped forward exactly.
pub fn tree_planting_loss_backward(
    sup: &SupervisionMatrix,
    word_attn: &WordAttention,
    upstream: f64,
) -> Vec<Vec<f64>> {
    let rows = sup.rows();
    let scale = upstream / rows as f64;
    let mut dw = vec![vec![0.0; sup.n]; rows];
    for r in 0..rows {
        for j in 0..=r {
            let p = sup.s[r][j];
            let q = word_attn.w[r][j];
            if p > 0.0 && q >= KL_EPS {
                dw[r][j] = -scale * p / q;
            }
        }
    }
    dw
}

/// Composite objective: `total = nwp + lambda * mean(tree_losses)`, the
/// mean over tree-planted heads. An empty list (no tree-planted heads)
/// leaves the total at the prediction loss alone.
pub fn total_loss(nwp: f64, tree_losses: &[f64], lambda: f64) -> Result<LossBreakdown> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("negative loss weight {lambda}")));
    }
    let total = if tree_losses.is_empty() {
        nwp
    } else {
        nwp + lambda * tree_losses.iter().sum::<f64>() / tree_losses.len() as f64
    };
    Ok(LossBreakdown {
        nwp,
        tree: tree_losses.to_vec(),
        total,
    })
}
