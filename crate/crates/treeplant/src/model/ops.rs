//! Differentiable primitives used by the transformer: row softmax with a
//! strict causal mask, scaled dot-product attention, layer normalization,
//! and the tanh GELU. Each forward has a matching hand-derived backward.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-5;

/// Row-wise softmax over the causal prefix: entries at column > row get
/// exactly zero. `scores` is (T, T).
pub fn causal_softmax(scores: &Array2<f64>) -> Array2<f64> {
    let t = scores.nrows();
    let mut a = Array2::zeros((t, t));
    for l in 0..t {
        let row = scores.row(l);
        let max = row.iter().take(l + 1).cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for m in 0..=l {
            let e = (row[m] - max).exp();
            a[[l, m]] = e;
            sum += e;
        }
        for m in 0..=l {
            a[[l, m]] /= sum;
        }
    }
    a
}

/// Backward of [`causal_softmax`]: `ds = a * (da - rowdot(da, a))` on the
/// causal region (zero elsewhere because the masked weights are constant 0).
pub fn causal_softmax_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let t = a.nrows();
    let mut ds = Array2::zeros((t, t));
    for l in 0..t {
        let mut dot = 0.0;
        for m in 0..=l {
            dot += da[[l, m]] * a[[l, m]];
        }
        for m in 0..=l {
            ds[[l, m]] = a[[l, m]] * (da[[l, m]] - dot);
        }
    }
    ds
}

/// Scaled dot-product attention under a strict causal mask.
///
/// Returns the mixed output `A . v` and the attention weights `A`, a
/// lower-triangular row-stochastic (T, T) matrix.
pub fn causal_attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if q.dim() != k.dim() || q.dim() != v.dim() {
        return Err(Error::Shape(format!(
            "attention inputs disagree: q {:?}, k {:?}, v {:?}",
            q.dim(),
            k.dim(),
            v.dim()
        )));
    }
    let dk = q.ncols();
    if dk == 0 {
        return Err(Error::Shape("zero-width attention inputs".into()));
    }
    let scale = 1.0 / (dk as f64).sqrt();
    let scores = q.dot(&k.t()) * scale;
    let a = causal_softmax(&scores);
    let out = a.dot(v);
    Ok((out, a))
}

/// Gradients of [`causal_attention`] given upstream `d_out` and `da`
/// (extra gradient injected directly on the attention weights; pass zeros
/// when unused). `a` is the forward attention matrix.
pub fn causal_attention_backward(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    a: &Array2<f64>,
    d_out: &Array2<f64>,
    da_extra: Option<&Array2<f64>>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut da = d_out.dot(&v.t());
    if let Some(extra) = da_extra {
        da += extra;
    }
    let ds = causal_softmax_backward(a, &da);
    let dq = ds.dot(k) * scale;
    let dk = ds.t().dot(q) * scale;
    let dv = a.t().dot(d_out);
    (dq, dk, dv)
}

/// Row-wise layer normalization: `y = xhat * g + b`. Returns `(y, xhat,
/// rstd)`; the latter two feed the backward pass.
pub fn layernorm(
    x: &Array2<f64>,
    g: &Array2<f64>,
    b: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let (t, d) = x.dim();
    let mut xhat = Array2::zeros((t, d));
    let mut rstd = Array1::zeros(t);
    for i in 0..t {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            xhat[[i, j]] = (row[j] - mean) * r;
        }
    }
    let y = &xhat * &g.row(0) + &b.row(0);
    (y, xhat, rstd)
}

/// Backward of [`layernorm`]; returns `(dx, dg, db)`.
pub fn layernorm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    rstd: &Array1<f64>,
    g: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (t, d) = dy.dim();
    let dg = (dy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let db = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let mut dx = Array2::zeros((t, d));
    for i in 0..t {
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            let dxh = dy[[i, j]] * g[[0, j]];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[[i, j]];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for j in 0..d {
            let dxh = dy[[i, j]] * g[[0, j]];
            dx[[i, j]] = rstd[i] * (dxh - mean_dxhat - xhat[[i, j]] * mean_dxhat_xhat);
        }
    }
    (dx, dg, db)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Log-softmax over one logits row.
pub fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|v| v - log_sum).collect()
}
