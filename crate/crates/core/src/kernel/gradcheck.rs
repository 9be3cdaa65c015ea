//! Central finite-difference validation of analytic gradients.

use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Index of the parameter with the largest error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares `analytic` against `(L(θ+ε) − L(θ−ε)) / 2ε` for every coordinate.
///
/// The error per coordinate is `|a − n| / max(|n|, RELATIVE_FLOOR)`.
pub fn finite_difference_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::shape(
            "finite_difference_check",
            format!("{} params vs {} gradients", params.len(), analytic.len()),
        ));
    }
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + eps;
        let plus = loss(&theta);
        theta[i] = orig - eps;
        let minus = loss(&theta);
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss at parameter {i}")));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(RELATIVE_FLOOR);
        if err > report.max_relative_error || i == 0 {
            report = GradCheckReport {
                max_relative_error: err,
                worst_index: i,
                analytic: analytic[i],
                numeric,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let r = finite_difference_check(|t| 0.5 * t[0] * t[0], &[3.0], &[3.0], 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-9, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_detected() {
        let r = finite_difference_check(|t| 0.5 * t[0] * t[0], &[3.0], &[6.0], 1e-5).unwrap();
        assert!((r.max_relative_error - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn non_finite_loss_is_error() {
        let r = finite_difference_check(|t| t[0].ln(), &[0.0], &[1.0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
