use serde::{Deserialize, Serialize};

use super::vector::{dot, Vector};
use super::LinalgError;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LinalgError::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(LinalgError::Shape(format!(
                "row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `A v`
    pub fn matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.cols, v.dim(), "matvec: dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
    ///
    /// Only the lower triangle of `self` is read. Fails on the first pivot
    /// that is not strictly positive.
    pub fn cholesky(&self) -> Result<Cholesky, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::Shape(format!(
                "cholesky needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let lj: Vec<f64> = l[j * n..j * n + j].to_vec();
            let diag = self.get(j, j) - dot(&lj, &lj);
            if !(diag > 0.0 && diag.is_finite()) {
                return Err(LinalgError::NotPositiveDefinite { pivot: j, value: diag });
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let s = self.get(i, j) - dot(&l[i * n..i * n + j], &lj);
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Validates symmetry and positive definiteness, keeping the factor.
    pub fn into_spd(self) -> Result<SpdMatrix, LinalgError> {
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if !self.is_symmetric(1e-12 * scale) {
            return Err(LinalgError::NotSymmetric);
        }
        let factor = self.cholesky()?;
        Ok(SpdMatrix { matrix: self, factor })
    }
}

/// Cholesky factorization `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        assert_eq!(self.n, b.dim(), "cholesky solve: dimension mismatch");
        let n = self.n;
        let mut z = b.clone();
        // L z = b
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            z[i] = (z[i] - dot(row, &z[..i])) / self.l[i * n + i];
        }
        // Lᵀ x = z
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }
}

/// A matrix whose symmetric positive definiteness has been established by a
/// successful Cholesky factorization.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    matrix: Matrix,
    factor: Cholesky,
}

impl SpdMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn matvec(&self, v: &Vector) -> Vector {
        self.matrix.matvec(v)
    }

    /// `A⁻¹ b` through the stored factor.
    pub fn solve(&self, b: &Vector) -> Vector {
        self.factor.solve(b)
    }
}

/// A square linear map given only through its action.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &Vector) -> Vector;
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        assert!(self.is_square(), "a linear operator must be square");
        self.rows
    }

    fn apply(&self, v: &Vector) -> Vector {
        self.matvec(v)
    }
}

impl LinearOperator for SpdMatrix {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn apply(&self, v: &Vector) -> Vector {
        self.matvec(v)
    }
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&Vector) -> Vector> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&Vector) -> Vector> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &Vector) -> Vector {
        (self.f)(v)
    }
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
///
/// Fails with [`LinalgError::NotPositiveDefinite`] naming the first failing
/// pivot when `A` is not SPD.
pub fn direct_solve(a: &Matrix, b: &Vector) -> Result<Vector, LinalgError> {
    if a.rows() != b.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.rows(),
            got: b.dim(),
        });
    }
    Ok(a.cholesky()?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Vector, b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn direct_solve_identity() {
        let x = direct_solve(&Matrix::identity(2), &Vector::from([5.0, -5.0])).unwrap();
        assert_eq!(x.as_slice(), &[5.0, -5.0]);
    }

    #[test]
    fn direct_solve_diagonal() {
        let x = direct_solve(&Matrix::from_diag(&[2.0, 4.0]), &Vector::from([2.0, 4.0])).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-15));
    }

    #[test]
    fn direct_solve_dense_2x2() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = direct_solve(&a, &Vector::from([3.0, 3.0])).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-14));
    }

    #[test]
    fn direct_solve_names_failing_pivot() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 1.0]]).unwrap();
        match direct_solve(&a, &Vector::ones(3)) {
            Err(LinalgError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("expected pivot failure, got {other:?}"),
        }
    }

    #[test]
    fn direct_solve_rejects_wrong_rhs_dim() {
        assert!(matches!(
            direct_solve(&Matrix::identity(3), &Vector::ones(2)),
            Err(LinalgError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn into_spd_rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(a.into_spd(), Err(LinalgError::NotSymmetric)));
    }

    #[test]
    fn from_rows_rejects_ragged() {
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
