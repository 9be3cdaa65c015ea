//! Single-head scaled dot-product attention with explicit masks.

use super::Matrix;
use crate::error::{Error, Result};

/// Logit assigned to masked positions; `exp` of it underflows to exactly zero.
pub const MASK_FILL: f64 = -1e30;

/// `n_q × n_k` table, `true` where the query may attend to the key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    n_q: usize,
    n_k: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn full(n_q: usize, n_k: usize) -> Self {
        Self {
            n_q,
            n_k,
            allowed: vec![true; n_q * n_k],
        }
    }

    pub fn from_fn(n_q: usize, n_k: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(n_q * n_k);
        for i in 0..n_q {
            for j in 0..n_k {
                allowed.push(f(i, j));
            }
        }
        Self { n_q, n_k, allowed }
    }

    /// Query `i` sees keys `0..=i`.
    pub fn causal(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| j <= i)
    }

    /// Every query sees every key not flagged as padding.
    pub fn key_padding(n_q: usize, key_is_pad: &[bool]) -> Self {
        Self::from_fn(n_q, key_is_pad.len(), |_, j| !key_is_pad[j])
    }

    pub fn and(&self, other: &AttentionMask) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "AttentionMask::and",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(Self {
            n_q: self.n_q,
            n_k: self.n_k,
            allowed: self
                .allowed
                .iter()
                .zip(&other.allowed)
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_q, self.n_k)
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.n_k + j]
    }

    fn row(&self, i: usize) -> &[bool] {
        &self.allowed[i * self.n_k..(i + 1) * self.n_k]
    }
}

/// In-place row softmax with per-row max subtraction.
pub fn softmax_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        softmax_in_place(m.row_mut(i));
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn check_shapes(q: &Matrix, k: &Matrix, v: &Matrix, mask: &AttentionMask) -> Result<()> {
    if q.cols() != k.cols() {
        return Err(Error::shape(
            "attention",
            format!("query width {} vs key width {}", q.cols(), k.cols()),
        ));
    }
    if k.rows() != v.rows() {
        return Err(Error::shape(
            "attention",
            format!("{} keys vs {} values", k.rows(), v.rows()),
        ));
    }
    if mask.shape() != (q.rows(), k.rows()) {
        return Err(Error::shape(
            "attention",
            format!("mask {:?} for {}x{}", mask.shape(), q.rows(), k.rows()),
        ));
    }
    for i in 0..q.rows() {
        if !mask.row(i).iter().any(|&a| a) {
            return Err(Error::FullyMaskedRow { row: i });
        }
    }
    Ok(())
}

/// Returns the attention output and the row-stochastic weight matrix.
pub fn attention_forward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    mask: &AttentionMask,
) -> Result<(Matrix, Matrix)> {
    check_shapes(q, k, v, mask)?;
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let mut weights = q.matmul_t(k)?;
    for i in 0..weights.rows() {
        let allowed = mask.row(i);
        for (s, &ok) in weights.row_mut(i).iter_mut().zip(allowed) {
            *s = if ok { *s * scale } else { MASK_FILL };
        }
    }
    softmax_rows(&mut weights);
    let out = weights.matmul(v)?;
    Ok((out, weights))
}

/// `softmax(Q Kᵀ / √d_k + mask) V`
pub fn scaled_dot_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    mask: &AttentionMask,
) -> Result<Matrix> {
    attention_forward(q, k, v, mask).map(|(out, _)| out)
}

pub struct AttentionGrads {
    pub dq: Matrix,
    pub dk: Matrix,
    pub dv: Matrix,
}

/// Backward pass given the forward weights. Masked weights are exactly zero,
/// so masked keys receive no gradient.
pub fn attention_backward(
    d_out: &Matrix,
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    weights: &Matrix,
) -> Result<AttentionGrads> {
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let dv = weights.t_matmul(d_out)?;
    let mut ds = d_out.matmul_t(v)?;
    for i in 0..ds.rows() {
        let p = weights.row(i);
        let row = ds.row_mut(i);
        let dot: f64 = row.iter().zip(p).map(|(a, b)| a * b).sum();
        for (d, &pi) in row.iter_mut().zip(p) {
            *d = pi * (*d - dot) * scale;
        }
    }
    let dq = ds.matmul(k)?;
    let dk = ds.t_matmul(q)?;
    Ok(AttentionGrads { dq, dk, dv })
}
