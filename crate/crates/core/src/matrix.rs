//! Dense row-major `f64` matrices.
//!
//! Only the handful of operations the networks and losses need. Products go
//! through `matrixmultiply::dgemm`, which lets the transposed variants reuse
//! the same kernel by swapping strides instead of materializing a transpose.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("from_vec", (rows, cols), (data.len(), 1)));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            (&self.data, self.cols as isize, 1),
            (&other.data, other.cols as isize, 1),
            &mut out.data,
            0.0,
        );
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape("matmul_nt", self.shape(), other.shape()));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            (&self.data, self.cols as isize, 1),
            (&other.data, 1, other.cols as isize),
            &mut out.data,
            0.0,
        );
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape("matmul_tn", self.shape(), other.shape()));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(
            self.cols,
            self.rows,
            other.cols,
            (&self.data, 1, self.cols as isize),
            (&other.data, other.cols as isize, 1),
            &mut out.data,
            0.0,
        );
        Ok(out)
    }

    /// `self += lhs · rhsᵀ`
    pub fn add_matmul_nt(&mut self, lhs: &Matrix, rhs: &Matrix) -> Result<()> {
        if lhs.cols != rhs.cols || self.rows != lhs.rows || self.cols != rhs.rows {
            return Err(Error::shape("add_matmul_nt", lhs.shape(), rhs.shape()));
        }
        gemm(
            lhs.rows,
            lhs.cols,
            rhs.rows,
            (&lhs.data, lhs.cols as isize, 1),
            (&rhs.data, 1, rhs.cols as isize),
            &mut self.data,
            1.0,
        );
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        self.check_same("zip_map", other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same("add_assign", other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    /// Sum over rows, giving a `(1, cols)` matrix.
    pub fn column_sums(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, x) in out.data.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape("hstack", self.shape(), other.shape()));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::shape("vstack", (rows, cols), m.shape()));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols);
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_range(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.rows);
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Repeats every row `times` times consecutively: row `r` lands on rows
    /// `r*times .. (r+1)*times`.
    pub fn repeat_rows(&self, times: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len() * times);
        for r in 0..self.rows {
            for _ in 0..times {
                data.extend_from_slice(self.row(r));
            }
        }
        Matrix {
            rows: self.rows * times,
            cols: self.cols,
            data,
        }
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check_same(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }
}

/// `c = a·b + beta·c` for an `(m, k)` by `(k, n)` product with explicit
/// row/column strides on the operands; `c` is contiguous row-major.
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize), c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: slice lengths cover every index reachable through the given
    // shapes and strides; the callers check the operand shapes first.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn identity_product() {
        let mut rng = Rng::new(3);
        let m = rng.gaussian(3, 3);
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn hand_checked_product() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Matrix::from_rows(&[&[5.0], &[6.0]]);
        assert_eq!(a.matmul(&b).unwrap(), Matrix::from_rows(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = Rng::new(11);
        let a = rng.gaussian(7, 5);
        let b = rng.gaussian(5, 3);
        let fast = a.matmul(&b).unwrap();
        assert!(fast.max_abs_diff(&naive(&a, &b)) < 1e-12);
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let mut rng = Rng::new(5);
        let a = rng.gaussian(6, 4);
        let b = rng.gaussian(9, 4);
        let c = rng.gaussian(6, 2);
        let nt = a.matmul_nt(&b).unwrap();
        assert!(nt.max_abs_diff(&naive(&a, &b.transpose())) < 1e-12);
        let tn = a.matmul_tn(&c).unwrap();
        assert!(tn.max_abs_diff(&naive(&a.transpose(), &c)) < 1e-12);
        let mut acc = nt.clone();
        acc.add_matmul_nt(&a, &b).unwrap();
        let mut doubled = nt;
        doubled.scale(2.0);
        assert!(acc.max_abs_diff(&doubled) < 1e-12);
    }

    #[test]
    fn dimension_mismatch_names_both_shapes() {
        let err = Matrix::zeros(2, 3).matmul(&Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
        assert!(matches!(
            err,
            Error::Shape {
                lhs: (2, 3),
                rhs: (2, 3),
                ..
            }
        ));
    }

    #[test]
    fn repeat_and_stack_helpers() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let r = m.repeat_rows(2);
        assert_eq!(r.row(1), &[1.0, 2.0]);
        assert_eq!(r.row(2), &[3.0, 4.0]);
        let h = m.hstack(&Matrix::column(&[9.0, 8.0])).unwrap();
        assert_eq!(h.row(1), &[3.0, 4.0, 8.0]);
        assert_eq!(h.columns(1, 3).row(0), &[2.0, 9.0]);
        let v = Matrix::vstack(&[&m, &m]).unwrap();
        assert_eq!(v.shape(), (4, 2));
        assert_eq!(m.column_sums().as_slice(), &[4.0, 6.0]);
    }

    proptest! {
        #[test]
        fn matmul_is_associative(seed in any::<u64>(), m in 1usize..6, k in 1usize..6, l in 1usize..6, n in 1usize..6) {
            let mut rng = Rng::new(seed);
            let a = rng.gaussian(m, k);
            let b = rng.gaussian(k, l);
            let c = rng.gaussian(l, n);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0));
            }
        }
    }
}
