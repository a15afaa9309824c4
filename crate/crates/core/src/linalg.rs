//! Minimal dense linear algebra: a column-major `f64` matrix plus the few
//! vector kernels the solvers need. Nothing here allocates per element or
//! hides cost; every routine is a plain loop over contiguous columns.

use crate::error::{Error, Result};

/// Dense matrix, column-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from column-major data. Errors if the length is inconsistent.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Mat> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix construction",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    /// Build from a slice of equal-length columns.
    pub fn from_cols(columns: &[Vec<f64>]) -> Result<Mat> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        let mut data = Vec::with_capacity(rows * cols);
        for col in columns {
            if col.len() != rows {
                return Err(Error::DimensionMismatch {
                    context: "matrix columns",
                    expected: rows,
                    got: col.len(),
                });
            }
            data.extend_from_slice(col);
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[c * self.rows + r] = v;
    }

    #[inline]
    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `A * x`, accumulated column by column so access stays contiguous.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matvec",
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.col(j), &mut y);
            }
        }
        Ok(y)
    }

    /// `A^T * x`: one dot product per column.
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "tr_matvec",
                expected: self.rows,
                got: x.len(),
            });
        }
        Ok((0..self.cols).map(|j| dot(self.col(j), x)).collect())
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for c in 0..self.cols {
            for r in 0..self.rows {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute deviation from symmetry; 0 for a symmetric matrix,
    /// infinite for a non-square one.
    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for c in 0..self.cols {
            for r in 0..c {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_major_layout() {
        // [[1, 3], [2, 4]] stored as columns [1,2],[3,4].
        let m = Mat::from_col_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.col(1), &[3.0, 4.0]);
    }

    #[test]
    fn matvec_and_transpose_agree() {
        let m = Mat::from_cols(&[vec![1.0, 0.0, 2.0], vec![-1.0, 3.0, 1.0]]).unwrap();
        assert_eq!(m.matvec(&[2.0, 1.0]).unwrap(), vec![1.0, 3.0, 5.0]);
        assert_eq!(m.tr_matvec(&[1.0, 1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
        let t = m.transpose();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.cols(), 3);
        assert_eq!(t.get(1, 2), m.get(2, 1));
    }

    #[test]
    fn shape_errors() {
        assert!(Mat::from_col_major(2, 2, vec![0.0; 3]).is_err());
        assert!(Mat::from_cols(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let m = Mat::zeros(2, 3);
        assert!(m.matvec(&[0.0; 2]).is_err());
        assert!(m.tr_matvec(&[0.0; 3]).is_err());
    }

    #[test]
    fn asymmetry_measure() {
        let sym = Mat::from_col_major(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(sym.max_asymmetry(), 0.0);
        let skew = Mat::from_col_major(2, 2, vec![0.0, -3.0, 3.0, 0.0]).unwrap();
        assert_eq!(skew.max_asymmetry(), 6.0);
    }
}
