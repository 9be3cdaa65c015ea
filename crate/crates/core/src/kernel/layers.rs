//! Layer normalization and the position-wise feed-forward block.

use super::Matrix;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-6;

pub struct LayerNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

pub fn layer_norm_forward(
    x: &Matrix,
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> Result<(Matrix, LayerNormCache)> {
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape(
            "layer_norm",
            format!("gain {} / bias {} for width {d}", gain.len(), bias.len()),
        ));
    }
    let mut normalized = x.clone();
    let mut out = Matrix::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = normalized.row_mut(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + eps).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * s);
        inv_std.push(s);
        let o = out.row_mut(i);
        for j in 0..d {
            o[j] = row[j] * gain[j] + bias[j];
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

/// Row-wise normalization to zero mean and unit population variance, then `gain ⊙ x̂ + bias`.
pub fn layer_norm(x: &Matrix, gain: &[f64], bias: &[f64], eps: f64) -> Result<Matrix> {
    layer_norm_forward(x, gain, bias, eps).map(|(y, _)| y)
}

/// Returns `dx`; gain and bias gradients are accumulated into the given slices.
pub fn layer_norm_backward(
    dy: &Matrix,
    cache: &LayerNormCache,
    gain: &[f64],
    d_gain: &mut [f64],
    d_bias: &mut [f64],
) -> Matrix {
    let d = dy.cols();
    let mut dx = Matrix::zeros(dy.rows(), d);
    let mut dxhat = vec![0.0; d];
    for i in 0..dy.rows() {
        let g = dy.row(i);
        let xhat = cache.normalized.row(i);
        for j in 0..d {
            d_gain[j] += g[j] * xhat[j];
            d_bias[j] += g[j];
            dxhat[j] = g[j] * gain[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let s = cache.inv_std[i];
        let out = dx.row_mut(i);
        for j in 0..d {
            out[j] = s * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
    }
    dx
}

pub struct FeedForwardCache {
    hidden: Matrix,
}

fn check_ffn(x: &Matrix, w1: &Matrix, b1: &[f64], w2: &Matrix, b2: &[f64]) -> Result<()> {
    if x.cols() != w1.rows()
        || w1.cols() != w2.rows()
        || w2.cols() != x.cols()
        || b1.len() != w1.cols()
        || b2.len() != w2.cols()
    {
        return Err(Error::shape(
            "position_wise_ffn",
            format!(
                "x {:?}, W1 {:?}, b1 {}, W2 {:?}, b2 {}",
                x.shape(),
                w1.shape(),
                b1.len(),
                w2.shape(),
                b2.len()
            ),
        ));
    }
    Ok(())
}

pub fn feed_forward_forward(
    x: &Matrix,
    w1: &Matrix,
    b1: &[f64],
    w2: &Matrix,
    b2: &[f64],
) -> Result<(Matrix, FeedForwardCache)> {
    check_ffn(x, w1, b1, w2, b2)?;
    let mut hidden = x.matmul(w1)?;
    hidden.add_row_vector(b1)?;
    hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    let mut out = hidden.matmul(w2)?;
    out.add_row_vector(b2)?;
    Ok((out, FeedForwardCache { hidden }))
}

/// `ReLU(x W1 + b1) W2 + b2`, row by row.
pub fn position_wise_ffn(
    x: &Matrix,
    w1: &Matrix,
    b1: &[f64],
    w2: &Matrix,
    b2: &[f64],
) -> Result<Matrix> {
    feed_forward_forward(x, w1, b1, w2, b2).map(|(y, _)| y)
}

pub struct FeedForwardGrads<'a> {
    pub w1: &'a mut Matrix,
    pub b1: &'a mut [f64],
    pub w2: &'a mut Matrix,
    pub b2: &'a mut [f64],
}

/// Returns `dx`; parameter gradients are accumulated into `grads`.
pub fn feed_forward_backward(
    d_out: &Matrix,
    x: &Matrix,
    cache: &FeedForwardCache,
    w1: &Matrix,
    w2: &Matrix,
    grads: FeedForwardGrads<'_>,
) -> Result<Matrix> {
    grads.w2.add_t_matmul(&cache.hidden, d_out);
    d_out.add_col_sums_into(grads.b2);
    let mut d_hidden = d_out.matmul_t(w2)?;
    d_hidden
        .data_mut()
        .iter_mut()
        .zip(cache.hidden.data())
        .for_each(|(d, &h)| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
    grads.w1.add_t_matmul(x, &d_hidden);
    d_hidden.add_col_sums_into(grads.b1);
    d_hidden.matmul_t(w1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_row_collapses() {
        let y = layer_norm(&Matrix::from_rows(&[[1.0, 1.0]]), &[1.0, 1.0], &[0.0, 0.0], 1e-6).unwrap();
        assert_eq!(y, Matrix::zeros(1, 2));
    }

    #[test]
    fn fixed_point_and_hand_value() {
        let y = layer_norm(&Matrix::from_rows(&[[1.0, -1.0]]), &[1.0; 2], &[0.0; 2], 1e-6).unwrap();
        assert!(y.max_abs_diff(&Matrix::from_rows(&[[1.0, -1.0]])) < 1e-5);
        let y = layer_norm(&Matrix::from_rows(&[[1.0, 2.0, 3.0]]), &[1.0; 3], &[0.0; 3], 1e-6).unwrap();
        let expect = Matrix::from_rows(&[[-1.2247, 0.0, 1.2247]]);
        assert!(y.max_abs_diff(&expect) < 1e-3);
    }

    #[test]
    fn gain_and_bias_apply() {
        let y = layer_norm(&Matrix::from_rows(&[[1.0, -1.0]]), &[2.0, 3.0], &[0.5, 0.5], 0.0).unwrap();
        assert_eq!(y, Matrix::from_rows(&[[2.5, -2.5]]));
    }

    #[test]
    fn layer_norm_shape_error() {
        assert!(layer_norm(&Matrix::zeros(1, 3), &[1.0; 2], &[0.0; 3], 1e-6).is_err());
    }

    #[test]
    fn ffn_identity_on_nonnegative() {
        let x = Matrix::from_rows(&[[0.5, 2.0], [0.0, 3.0]]);
        let id = Matrix::identity(2);
        let y = position_wise_ffn(&x, &id, &[0.0; 2], &id, &[0.0; 2]).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ffn_relu_clips() {
        let one = Matrix::from_rows(&[[1.0]]);
        let y = position_wise_ffn(&Matrix::from_rows(&[[-5.0]]), &one, &[0.0], &one, &[0.0]).unwrap();
        assert_eq!(y, Matrix::from_rows(&[[0.0]]));
    }

    #[test]
    fn ffn_matches_scalar_loop() {
        let x = Matrix::from_rows(&[[0.3, -1.2], [2.1, 0.7]]);
        let w1 = Matrix::from_rows(&[[0.5, -0.4, 1.1], [0.9, 0.2, -0.6]]);
        let b1 = [0.1, -0.2, 0.05];
        let w2 = Matrix::from_rows(&[[1.5, -0.3], [0.2, 0.8], [-0.7, 0.4]]);
        let b2 = [0.01, -0.02];
        let y = position_wise_ffn(&x, &w1, &b1, &w2, &b2).unwrap();
        for i in 0..2 {
            for c in 0..2 {
                let mut acc = b2[c];
                for h in 0..3 {
                    let mut pre = b1[h];
                    for k in 0..2 {
                        pre += x.get(i, k) * w1.get(k, h);
                    }
                    acc += pre.max(0.0) * w2.get(h, c);
                }
                assert!((y.get(i, c) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ffn_shape_error() {
        let x = Matrix::zeros(1, 2);
        assert!(position_wise_ffn(&x, &Matrix::zeros(3, 4), &[0.0; 4], &Matrix::zeros(4, 2), &[0.0; 2]).is_err());
    }
}
