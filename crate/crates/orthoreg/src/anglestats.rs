//! Pairwise-angle analytics over weight matrices: the instruments used to
//! watch detector geometry during training and experiments.
//!
//! Angles are reported in degrees over [0°, 180°]; antipodal detectors are
//! 180° apart, not 0° — these are vector angles, not line angles, matching
//! the local loss's view that opposite detectors are unrelated.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Summary of a weight matrix's pairwise geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleStats {
    /// Smallest angle between any two detectors — the decorrelation bound
    /// the matrix currently achieves.
    pub min_pairwise_angle: f64,
    /// Mean over detectors of each detector's nearest-neighbor angle — the
    /// uniformity metric (per-row minimum first, then the mean).
    pub mean_nn_angle: f64,
    /// Unordered-pair counts over equal-width bins spanning [0°, 180°].
    /// Bins are left-closed, right-open, except the last which includes 180°.
    pub histogram: Vec<u64>,
    pub n_detectors: usize,
}

/// Symmetric matrix of pairwise angles in degrees, zero diagonal.
pub fn pairwise_angles(theta: &Matrix) -> Result<Matrix> {
    let n = theta.rows();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 detectors for pairwise angles, got {n}"
        )));
    }
    let (unit, _) = theta.normalize_rows()?;
    let gram = unit.gram();
    let mut out = Matrix::zeros(n, n)?;
    for i in 0..n {
        for k in (i + 1)..n {
            let angle = gram.get(i, k).clamp(-1.0, 1.0).acos().to_degrees();
            out.set(i, k, angle);
            out.set(k, i, angle);
        }
    }
    Ok(out)
}

/// Per-detector nearest-neighbor angle: entry i is the smallest angle from
/// detector i to any other detector.
pub fn nn_angles(theta: &Matrix) -> Result<Vec<f64>> {
    let angles = pairwise_angles(theta)?;
    let n = angles.rows();
    Ok((0..n)
        .map(|i| {
            angles
                .row(i)
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, &a)| a)
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Aggregates minimum pairwise angle, mean nearest-neighbor angle, and an
/// unordered-pair histogram with `n_bins` bins.
pub fn summarize(theta: &Matrix, n_bins: usize) -> Result<AngleStats> {
    if n_bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least 1 bin".into()));
    }
    let angles = pairwise_angles(theta)?;
    let n = angles.rows();
    let mut histogram = vec![0u64; n_bins];
    let mut min_angle = f64::INFINITY;
    for i in 0..n {
        for k in (i + 1)..n {
            let a = angles.get(i, k);
            min_angle = min_angle.min(a);
            let bin = ((a / 180.0) * n_bins as f64) as usize;
            histogram[bin.min(n_bins - 1)] += 1;
        }
    }
    let nn = nn_angles(theta)?;
    let mean_nn_angle = nn.iter().sum::<f64>() / nn.len() as f64;
    Ok(AngleStats {
        min_pairwise_angle: min_angle,
        mean_nn_angle,
        histogram,
        n_detectors: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn fan(angles_deg: &[f64]) -> Matrix {
        Matrix::from_rows(
            &angles_deg
                .iter()
                .map(|a| {
                    let r = a.to_radians();
                    vec![r.cos(), r.sin()]
                })
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn pairwise_angle_examples() {
        let ortho = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(pairwise_angles(&ortho).unwrap().get(0, 1), 90.0);

        let antipodal = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(pairwise_angles(&antipodal).unwrap().get(0, 1), 180.0);

        let diag = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_relative_eq!(pairwise_angles(&diag).unwrap().get(0, 1), 45.0);
    }

    #[test]
    fn pairwise_angles_rejects_single_row_and_zero_row() {
        assert!(pairwise_angles(&Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap()).is_err());
        let degenerate = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(pairwise_angles(&degenerate).is_err());
    }

    #[test]
    fn nn_angle_examples() {
        let m = fan(&[0.0, 30.0, 90.0]);
        let nn = nn_angles(&m).unwrap();
        assert_abs_diff_eq!(nn[0], 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(nn[1], 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(nn[2], 60.0, epsilon = 1e-9);

        let ortho = Matrix::identity(4).unwrap();
        assert!(nn_angles(&ortho).unwrap().iter().all(|&a| (a - 90.0).abs() < 1e-9));

        let dup = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(nn_angles(&dup).unwrap().iter().all(|&a| a.abs() < 1e-7));
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&fan(&[0.0, 30.0, 90.0]), 36).unwrap();
        assert_abs_diff_eq!(s.mean_nn_angle, 40.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.min_pairwise_angle, 30.0, epsilon = 1e-9);
        assert_eq!(s.n_detectors, 3);
        assert_eq!(s.histogram.iter().sum::<u64>(), 3);

        let basis = summarize(&Matrix::identity(4).unwrap(), 36).unwrap();
        assert_abs_diff_eq!(basis.mean_nn_angle, 90.0);
        assert_abs_diff_eq!(basis.min_pairwise_angle, 90.0);

        let cross = summarize(&fan(&[0.0, 90.0, 180.0, 270.0]), 36).unwrap();
        assert_abs_diff_eq!(cross.mean_nn_angle, 90.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cross.min_pairwise_angle, 90.0, epsilon = 1e-9);
    }

    #[test]
    fn histogram_last_bin_includes_antipodal() {
        let antipodal = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let s = summarize(&antipodal, 4).unwrap();
        assert_eq!(s.histogram, vec![0, 0, 0, 1]);
        assert!(summarize(&antipodal, 0).is_err());
    }

    #[test]
    fn mean_nn_never_below_min_pairwise() {
        let s = summarize(&fan(&[3.0, 17.0, 40.0, 160.0, 220.0]), 18).unwrap();
        assert!(s.mean_nn_angle >= s.min_pairwise_angle);
    }
}
