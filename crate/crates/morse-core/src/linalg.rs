//! Small dense vectors and matrices in f64.
//!
//! Data in this crate are flat vectors of modest dimension (tens of entries),
//! so the linear algebra is a direct, allocation-friendly implementation:
//! Cholesky solves for SPD systems and a cyclic Jacobi eigensolver for
//! symmetric matrices. No external backend.

use crate::error::{Error, Result};

/// A finite real vector with at least one entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("vector must have dim >= 1".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite vector entry: {bad}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dim must be >= 1");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn scale(&self, a: f64) -> Vector {
        Vector(self.0.iter().map(|v| a * v).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "vector dim mismatch");
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "vector dim mismatch");
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// self + a * other
    pub fn add_scaled(&self, a: f64, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "vector dim mismatch");
        Vector(self.0.iter().zip(&other.0).map(|(x, y)| x + a * y).collect())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "vector dim mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "vector dim mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Vec<f64> {
        v.0
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dims must be >= 1");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Config("matrix must be non-empty".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape { expected: cols, got: rows.iter().map(|r| r.len()).max().unwrap() });
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite matrix entry: {bad}")));
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dim mismatch");
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for c in 0..self.cols {
                acc += row[c] * x[c];
            }
            out[r] = acc;
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dim mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        out
    }

    pub fn scale(&self, a: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| a * v).collect() }
    }

    /// self + a * other (same shape).
    pub fn add_scaled(&self, a: f64, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(x, y)| x + a * y).collect(),
        }
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    /// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
    ///
    /// Returns (eigenvalues, V) with `self = V diag(w) V^T` and V orthonormal
    /// (eigenvectors in columns). Eigenvalues are sorted ascending.
    pub fn sym_eigen(&self) -> Result<(Vec<f64>, Matrix)> {
        assert_eq!(self.rows, self.cols, "sym_eigen needs a square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut v = Matrix::identity(n);
        let fro: f64 = self.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        let tol = 1e-15 * fro.max(1.0);

        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for r in 0..n {
                for c in (r + 1)..n {
                    off += a.get(r, c).powi(2);
                }
            }
            if off.sqrt() <= tol {
                let mut pairs: Vec<(f64, usize)> =
                    (0..n).map(|i| (a.get(i, i), i)).collect();
                pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
                let w: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let mut vs = Matrix::zeros(n, n);
                for (new_col, &(_, old_col)) in pairs.iter().enumerate() {
                    for r in 0..n {
                        vs.set(r, new_col, v.get(r, old_col));
                    }
                }
                return Ok((w, vs));
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() <= tol / (n as f64) {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let cos = 1.0 / (t * t + 1.0).sqrt();
                    let sin = t * cos;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, cos * akp - sin * akq);
                        a.set(k, q, sin * akp + cos * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, cos * apk - sin * aqk);
                        a.set(q, k, sin * apk + cos * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, cos * vkp - sin * vkq);
                        v.set(k, q, sin * vkp + cos * vkq);
                    }
                }
            }
        }
        Err(Error::Numeric("jacobi eigensolver did not converge in 100 sweeps".into()))
    }

    /// Symmetric PSD square root via eigendecomposition. Eigenvalues slightly
    /// below zero (within `slack`) are clamped to zero; anything lower is a
    /// domain error.
    pub fn sqrt_psd(&self, slack: f64) -> Result<Matrix> {
        let (w, v) = self.sym_eigen()?;
        if let Some(bad) = w.iter().find(|&&x| x < -slack) {
            return Err(Error::Domain(format!("matrix is not PSD: eigenvalue {bad}")));
        }
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let s = w[k].max(0.0).sqrt();
            if s == 0.0 {
                continue;
            }
            for r in 0..n {
                for c in 0..n {
                    out.data[r * n + c] += s * v.get(r, k) * v.get(c, k);
                }
            }
        }
        Ok(out)
    }

    /// Cholesky factor L with self = L L^T. Fails for non-SPD input.
    pub fn cholesky(&self) -> Result<Matrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Singularity(format!(
                            "cholesky pivot {sum} at index {i}; matrix not positive definite"
                        )));
                    }
                    l.set(i, j, sum.sqrt());
                } else {
                    l.set(i, j, sum / l.get(j, j));
                }
            }
        }
        Ok(l)
    }

    /// Solve self * x = b for SPD self.
    pub fn solve_spd(&self, b: &[f64]) -> Result<Vec<f64>> {
        let l = self.cholesky()?;
        Ok(l.solve_cholesky(b))
    }

    /// Inverse of an SPD matrix (column-by-column Cholesky solves).
    pub fn inverse_spd(&self) -> Result<Matrix> {
        let n = self.rows;
        let l = self.cholesky()?;
        let mut out = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            let col = l.solve_cholesky(&e);
            for r in 0..n {
                out.set(r, c, col[r]);
            }
            e[c] = 0.0;
        }
        Ok(out)
    }

    fn solve_cholesky(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rows;
        assert_eq!(b.len(), n);
        // forward: L y = b
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.get(i, k) * y[k];
            }
            y[i] = sum / self.get(i, i);
        }
        // backward: L^T x = y
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= self.get(k, i) * x[k];
            }
            x[i] = sum / self.get(i, i);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vector_rejects_empty_and_nonfinite() {
        assert!(Vector::new(vec![]).is_err());
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(Vector::new(vec![0.0]).is_ok());
    }

    #[test]
    fn matvec_and_matmul_hand_values() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![3.0, 7.0]);
        let p = m.matmul(&Matrix::identity(2));
        assert_eq!(p, m);
        let sq = m.matmul(&m);
        assert_eq!(sq.row(0), &[7.0, 10.0]);
        assert_eq!(sq.row(1), &[15.0, 22.0]);
    }

    #[test]
    fn jacobi_eigen_hand_case() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (w, v) = m.sym_eigen().unwrap();
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(w[1], 3.0, epsilon = 1e-12);
        // reconstruct
        let recon = v.matmul(&Matrix::diag(&w)).matmul(&v.transpose());
        for r in 0..2 {
            for c in 0..2 {
                assert_relative_eq!(recon.get(r, c), m.get(r, c), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_eigen_random_reconstruction() {
        use crate::stream::NoiseStream;
        let mut stream = NoiseStream::from_seed(7);
        for n in [1usize, 2, 3, 5, 8, 16] {
            // random symmetric matrix
            let mut m = Matrix::zeros(n, n);
            for r in 0..n {
                for c in r..n {
                    let v = stream.standard_normal();
                    m.set(r, c, v);
                    m.set(c, r, v);
                }
            }
            let (w, v) = m.sym_eigen().unwrap();
            let recon = v.matmul(&Matrix::diag(&w)).matmul(&v.transpose());
            for r in 0..n {
                for c in 0..n {
                    assert!((recon.get(r, c) - m.get(r, c)).abs() < 1e-10);
                }
            }
            // orthonormality
            let vtv = v.transpose().matmul(&v);
            for r in 0..n {
                for c in 0..n {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!((vtv.get(r, c) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let r = m.sqrt_psd(1e-12).unwrap();
        let sq = r.matmul(&r);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(sq.get(i, j), m.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_psd_rejects_indefinite() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(m.sqrt_psd(1e-12), Err(Error::Domain(_))));
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let m = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = m.solve_spd(&[1.0, 2.0]).unwrap();
        let b = m.matvec(&x);
        assert_relative_eq!(b[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(b[1], 2.0, epsilon = 1e-12);
        let inv = m.inverse_spd().unwrap();
        let eye = m.matmul(&inv);
        assert_relative_eq!(eye.get(0, 0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(eye.get(0, 1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(m.cholesky().is_err());
    }
}
