//! Minimal dense f64 linear algebra: just the kernels the regularizer and the
//! network engine need, row-major throughout. Rows are feature detectors, so
//! all per-detector operations (norms, normalization, scaling) act on rows.
//!
//! Products use a fixed accumulation order (ascending inner index), which
//! keeps every result bit-reproducible across runs.

use crate::error::{Error, Result};

/// Row norms at or below this threshold are considered degenerate: such a row
/// has no direction, so cosines and angles against it are undefined.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Dense row-major matrix of `f64`. Shapes are validated at construction and
/// on every binary operation; dimension errors are reported, never broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch(format!(
                "matrix dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!(
                "non-finite entry {bad} in matrix data"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("ragged row lengths".into()));
        }
        Self::from_vec(n, d, rows.concat())
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self * rhs`. The loop nest is i-k-j, processed four output rows at a
    /// time so each rhs row is loaded once per four rows of output;
    /// accumulation order per entry is ascending k regardless of blocking.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols)?;
        let cols = rhs.cols;
        let quads = self.rows / 4 * 4;
        let mut out_rows = out.data.chunks_exact_mut(cols);
        for i in (0..quads).step_by(4) {
            let o0 = out_rows.next().unwrap();
            let o1 = out_rows.next().unwrap();
            let o2 = out_rows.next().unwrap();
            let o3 = out_rows.next().unwrap();
            let (a0, a1) = (self.row(i), self.row(i + 1));
            let (a2, a3) = (self.row(i + 2), self.row(i + 3));
            for k in 0..self.cols {
                let (s0, s1, s2, s3) = (a0[k], a1[k], a2[k], a3[k]);
                if s0 == 0.0 && s1 == 0.0 && s2 == 0.0 && s3 == 0.0 {
                    continue;
                }
                let b_row = rhs.row(k);
                for j in 0..cols {
                    let b = b_row[j];
                    o0[j] += s0 * b;
                    o1[j] += s1 * b;
                    o2[j] += s2 * b;
                    o3[j] += s3 * b;
                }
            }
        }
        for i in quads..self.rows {
            let out_row = out_rows.next().unwrap();
            let a_row = self.row(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = rhs.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs^T`: every output entry is a dot product of two rows, which
    /// is the cache-friendly orientation for row-major data. Rows are paired
    /// so each rhs row serves two dot products per pass.
    pub fn matmul_nt(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by transpose of {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.rows)?;
        let n_out = rhs.rows;
        let pairs = self.rows / 2 * 2;
        for i in (0..pairs).step_by(2) {
            let (a0, a1) = (self.row(i), self.row(i + 1));
            for j in 0..n_out {
                let (v0, v1) = dot2(a0, a1, rhs.row(j));
                out.data[i * n_out + j] = v0;
                out.data[(i + 1) * n_out + j] = v1;
            }
        }
        if pairs < self.rows {
            let i = pairs;
            let a_row = self.row(i);
            for j in 0..n_out {
                out.data[i * n_out + j] = dot(a_row, rhs.row(j));
            }
        }
        Ok(out)
    }

    /// `self^T * rhs`, accumulated row-by-row of the common dimension.
    pub fn matmul_tn(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply transpose of {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, rhs.cols)?;
        for b in 0..self.rows {
            let a_row = self.row(b);
            let b_row = rhs.row(b);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(k);
                for (o, &v) in out_row.iter_mut().zip(b_row) {
                    *o += a * v;
                }
            }
        }
        Ok(out)
    }

    /// Gram matrix `self * self^T`: entry (i, k) is the inner product of
    /// detectors i and k. Computed once per pair and mirrored; rows are
    /// paired so each counterpart row serves two inner products per pass.
    pub fn gram(&self) -> Matrix {
        let n = self.rows;
        let mut out = Matrix {
            rows: n,
            cols: n,
            data: vec![0.0; n * n],
        };
        let pairs = n / 2 * 2;
        for i in (0..pairs).step_by(2) {
            let (r0, r1) = (self.row(i), self.row(i + 1));
            for k in i..n {
                let (v0, v1) = dot2(r0, r1, self.row(k));
                out.data[i * n + k] = v0;
                out.data[k * n + i] = v0;
                // (i+1, i) is the mirror of (i, i+1), already written above
                if k > i {
                    out.data[(i + 1) * n + k] = v1;
                    out.data[k * n + i + 1] = v1;
                }
            }
        }
        if pairs < n {
            let i = pairs;
            out.data[i * n + i] = dot(self.row(i), self.row(i));
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix {
            rows: self.cols,
            cols: self.rows,
            data: vec![0.0; self.data.len()],
        };
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Splits `self` into a unit-row matrix and the vector of original row
    /// norms, so `scale_rows(normalized, norms)` reconstructs the input.
    pub fn normalize_rows(&self) -> Result<(Matrix, Vec<f64>)> {
        let mut out = self.clone();
        let mut norms = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let norm = self.row_norm(i);
            if norm <= DEGENERATE_EPS {
                return Err(Error::DegenerateRow { row: i, norm });
            }
            for v in out.row_mut(i) {
                *v /= norm;
            }
            norms.push(norm);
        }
        Ok((out, norms))
    }

    pub fn scale_rows(&self, scales: &[f64]) -> Result<Matrix> {
        if scales.len() != self.rows {
            return Err(Error::ShapeMismatch(format!(
                "{} scales for {} rows",
                scales.len(),
                self.rows
            )));
        }
        let mut out = self.clone();
        for (i, &s) in scales.iter().enumerate() {
            for v in out.row_mut(i) {
                *v *= s;
            }
        }
        Ok(out)
    }

    /// Copy with the diagonal zeroed — drops each detector's self-interaction
    /// term from a Gram-type matrix.
    pub fn zero_diag(&self) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "zero_diag needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            out.data[i * self.cols + i] = 0.0;
        }
        Ok(out)
    }

    /// `self + factor * other`, shape-checked.
    pub fn add_scaled(&self, other: &Matrix, factor: f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "cannot combine {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o += factor * v;
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= factor;
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = f(*v);
        }
        out
    }

    /// Largest absolute entry-wise difference; shape mismatch is reported as
    /// infinity rather than an error so comparisons read naturally in tests.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Dot product over eight independent accumulator lanes. A single running
/// sum serializes on the add latency and caps throughput at well under a
/// flop per cycle; eight lanes keep the FMA units busy and let the compiler
/// vectorize. The lanes and the tail fold in a fixed order, so results are
/// deterministic for a given slice length.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let mut chunks = a.chunks_exact(LANES).zip(b.chunks_exact(LANES));
    for (ca, cb) in &mut chunks {
        for l in 0..LANES {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0;
    let ra = a.chunks_exact(LANES).remainder();
    let rb = b.chunks_exact(LANES).remainder();
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    acc.iter().fold(tail, |s, v| s + v)
}

/// Two dot products against a shared right-hand side, so `b` is loaded once.
/// Each result accumulates in exactly the order [`dot`] uses, so
/// `dot2(a0, a1, b)` equals `(dot(a0, b), dot(a1, b))` bit for bit.
#[inline]
fn dot2(a0: &[f64], a1: &[f64], b: &[f64]) -> (f64, f64) {
    debug_assert!(a0.len() == b.len() && a1.len() == b.len());
    const LANES: usize = 8;
    let mut acc0 = [0.0f64; LANES];
    let mut acc1 = [0.0f64; LANES];
    let mut chunks = a0
        .chunks_exact(LANES)
        .zip(a1.chunks_exact(LANES))
        .zip(b.chunks_exact(LANES));
    for ((c0, c1), cb) in &mut chunks {
        for l in 0..LANES {
            acc0[l] += c0[l] * cb[l];
            acc1[l] += c1[l] * cb[l];
        }
    }
    let r0 = a0.chunks_exact(LANES).remainder();
    let r1 = a1.chunks_exact(LANES).remainder();
    let rb = b.chunks_exact(LANES).remainder();
    let mut t0 = 0.0;
    let mut t1 = 0.0;
    for ((x0, x1), y) in r0.iter().zip(r1).zip(rb) {
        t0 += x0 * y;
        t1 += x1 * y;
    }
    (
        acc0.iter().fold(t0, |s, v| s + v),
        acc1.iter().fold(t1, |s, v| s + v),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matmul_identity_is_noop() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let id = Matrix::identity(3).unwrap();
        assert_eq!(m.matmul(&id).unwrap(), m);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_scalar_case() {
        let a = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let b = Matrix::from_vec(1, 1, vec![-4.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[-12.0]);
    }

    #[test]
    fn matmul_rejects_mismatched_shapes() {
        let a = Matrix::zeros(2, 3).unwrap();
        let b = Matrix::zeros(2, 3).unwrap();
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn matmul_transpose_variants_agree_with_plain_matmul() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![2.0, 1.0, -1.0], vec![0.5, 0.0, 4.0]]).unwrap();
        let nt = a.matmul_nt(&b).unwrap();
        assert_eq!(nt, a.matmul(&b.transpose()).unwrap());
        let tn = a.matmul_tn(&b).unwrap();
        assert_eq!(tn, a.transpose().matmul(&b).unwrap());
    }

    #[test]
    fn gram_of_duplicate_unit_rows() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(m.gram().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn gram_of_single_row_is_squared_norm() {
        let m = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.gram().data(), &[25.0]);
    }

    #[test]
    fn gram_of_orthonormal_rows_is_identity() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let g = m.gram();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn normalize_rows_three_four_five() {
        let m = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let (unit, norms) = m.normalize_rows().unwrap();
        assert_relative_eq!(unit.get(0, 0), 0.6);
        assert_relative_eq!(unit.get(0, 1), 0.8);
        assert_relative_eq!(norms[0], 5.0);
        let back = unit.scale_rows(&norms).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn normalize_rows_rejects_zero_row() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        match m.normalize_rows() {
            Err(Error::DegenerateRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected degenerate-row error, got {other:?}"),
        }
    }

    #[test]
    fn zero_diag_examples() {
        let id = Matrix::identity(3).unwrap();
        assert_eq!(id.zero_diag().unwrap(), Matrix::zeros(3, 3).unwrap());
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(
            m.zero_diag().unwrap().data(),
            &[0.0, 2.0, 3.0, 0.0]
        );
        let one = Matrix::from_vec(1, 1, vec![7.0]).unwrap();
        assert_eq!(one.zero_diag().unwrap().data(), &[0.0]);
        assert!(Matrix::zeros(2, 3).unwrap().zero_diag().is_err());
    }

    #[test]
    fn constructors_reject_empty_and_non_finite() {
        assert!(Matrix::zeros(0, 2).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![f64::NAN, 0.0]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
