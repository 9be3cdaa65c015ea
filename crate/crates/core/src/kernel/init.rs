use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Matrix;
use crate::error::{Error, Result};

/// Deterministic generator used throughout training and initialization.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn orthonormalize_columns(m: &mut Matrix) {
    let (rows, cols) = m.shape();
    for j in 0..cols {
        // Two Gram-Schmidt passes keep the columns orthogonal to machine precision.
        for _ in 0..2 {
            for p in 0..j {
                let dot: f64 = (0..rows).map(|i| m.get(i, j) * m.get(i, p)).sum();
                for i in 0..rows {
                    let v = m.get(i, j) - dot * m.get(i, p);
                    m.set(i, j, v);
                }
            }
        }
        let norm = (0..rows).map(|i| m.get(i, j).powi(2)).sum::<f64>().sqrt();
        for i in 0..rows {
            let v = m.get(i, j) / norm;
            m.set(i, j, v);
        }
    }
}

/// Orthonormal columns when `rows >= cols`, orthonormal rows otherwise.
pub fn orthogonal_init(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut m = Matrix::from_fn(tall, short, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize_columns(&mut m);
    if rows >= cols {
        m
    } else {
        m.transpose()
    }
}

/// I.i.d. samples from `[lo, hi)`.
pub fn uniform_init(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Result<Matrix> {
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidArgument(format!(
            "uniform_init requires lo < hi, got [{lo}, {hi})"
        )));
    }
    Ok(Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi)))
}
