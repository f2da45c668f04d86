//! Central finite-difference oracle for verifying analytic gradients.
//!
//! The comparison metric is scaled to the largest entry of either gradient
//! (not entry-wise), so entries that are analytically zero don't turn FD
//! rounding noise into spurious relative blow-ups.

use crate::error::Result;
use crate::linalg::Matrix;

/// Central-difference gradient of a scalar function of a matrix: perturbs
/// each entry by ±step and differences the loss.
pub fn central_diff_grad<F>(f: F, at: &Matrix, step: f64) -> Result<Matrix>
where
    F: Fn(&Matrix) -> Result<f64>,
{
    let mut grad = Matrix::zeros(at.rows(), at.cols())?;
    let mut probe = at.clone();
    for i in 0..at.rows() {
        for j in 0..at.cols() {
            let orig = probe.get(i, j);
            probe.set(i, j, orig + step);
            let plus = f(&probe)?;
            probe.set(i, j, orig - step);
            let minus = f(&probe)?;
            probe.set(i, j, orig);
            grad.set(i, j, (plus - minus) / (2.0 * step));
        }
    }
    Ok(grad)
}

/// Largest entry-wise difference between two gradients, relative to the
/// largest-magnitude entry of either. Infinite if the shapes disagree.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let scale = analytic.max_abs().max(numeric.max_abs()).max(1e-12);
    analytic.max_abs_diff(numeric) / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_gradient_of_quadratic() {
        // f(M) = Σ entries², gradient 2M
        let m = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let fd = central_diff_grad(
            |x| Ok(x.data().iter().map(|v| v * v).sum()),
            &m,
            1e-6,
        )
        .unwrap();
        let analytic = m.scale(2.0);
        assert!(max_relative_error(&analytic, &fd) < 1e-9);
    }

    #[test]
    fn relative_error_detects_scale_mismatch() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let b = a.scale(1.5);
        let err = max_relative_error(&a, &b);
        assert!(err > 0.3 && err < 0.34);
    }
}
