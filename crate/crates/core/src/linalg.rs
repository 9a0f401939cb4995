//! Small dense kernels: a symmetric matrix type, Cholesky factorization and a
//! cyclic Jacobi eigensolver. Sizes are desk scale (a few thousand at most
//! for Cholesky, tens for Jacobi).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math::{abs, sqrt};

/// Dense symmetric matrix stored row-major in full.
///
/// Rank-one updates touch only the upper triangle; call [`SymMat::mirror_upper`]
/// before reading the lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    dim: usize,
    data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.add_diagonal(1.0);
        m
    }

    /// Builds from a full row-major buffer; the upper triangle is mirrored
    /// into the lower one.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        check_len(dim * dim, data.len())?;
        let mut m = Self { dim, data };
        m.mirror_upper();
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    /// `self += w * x x^T`, upper triangle only.
    pub fn rank_one_upper(&mut self, w: f64, x: &[f64]) {
        let n = self.dim;
        for i in 0..n {
            let wi = w * x[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for j in i..n {
                row[j] += wi * x[j];
            }
        }
    }

    pub fn mirror_upper(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in 0..i {
                self.data[i * n + j] = self.data[j * n + i];
            }
        }
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += value;
        }
    }

    pub fn add_assign(&mut self, other: &SymMat) -> Result<()> {
        check_len(self.dim, other.dim)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.data {
            *a *= factor;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.dim.max(1))
            .take(self.dim)
            .map(|row| crate::math::dot(row, x))
            .collect()
    }

    /// `x^T A x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        crate::math::dot(&self.mul_vec(x), x)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest absolute asymmetry `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max(abs(self.get(i, j) - self.get(j, i)));
            }
        }
        worst
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &SymMat) -> Result<Self> {
        Self::factor_slice(a.dim, &a.data)
    }

    /// Factors a full row-major symmetric buffer (only the lower triangle is read).
    pub fn factor_slice(n: usize, a: &[f64]) -> Result<Self> {
        check_len(n * n, a.len())?;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = a[j * n + j];
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = sqrt(diag);
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { dim: n, lower: l })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, b.len())?;
        let n = self.dim;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        Ok(y)
    }
}

/// Eigenpairs of a symmetric matrix.
///
/// `vectors` is row-major `n x n` with eigenvector `i` stored in **row** `i`,
/// so `A = vectors^T diag(values) vectors`. Order is not sorted: a matrix
/// that is already diagonal comes back unchanged with identity vectors.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

/// Cyclic Jacobi rotations until the off-diagonal mass falls below
/// `1e-15 * ||A||_F` (or 100 sweeps).
pub fn symmetric_eigen(n: usize, a: &[f64]) -> Result<SymmetricEigen> {
    check_len(n * n, a.len())?;
    let mut m = a.to_vec();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    let frob: f64 = sqrt(m.iter().map(|x| x * x).sum());
    if frob == 0.0 {
        return Ok(SymmetricEigen {
            values: vec![0.0; n],
            vectors: q,
        });
    }
    let tol = 1e-15 * frob;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * m[i * n + j] * m[i * n + j];
            }
        }
        if sqrt(off) <= tol {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = m[p * n + r];
                if apr == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let arr = m[r * n + r];
                let theta = (arr - app) / (2.0 * apr);
                let t = if theta >= 0.0 {
                    1.0 / (theta + sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = t * c;
                // A <- J^T A J on rows/cols p, r
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akr = m[k * n + r];
                    m[k * n + p] = c * akp - s * akr;
                    m[k * n + r] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let ark = m[r * n + k];
                    m[p * n + k] = c * apk - s * ark;
                    m[r * n + k] = s * apk + c * ark;
                }
                m[p * n + r] = 0.0;
                m[r * n + p] = 0.0;
                // eigenvectors are rows of q
                for k in 0..n {
                    let qp = q[p * n + k];
                    let qr = q[r * n + k];
                    q[p * n + k] = c * qp - s * qr;
                    q[r * n + k] = s * qp + c * qr;
                }
            }
        }
    }
    let values = (0..n).map(|i| m[i * n + i]).collect();
    Ok(SymmetricEigen { values, vectors: q })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_diagonal_system() {
        let a = SymMat::from_row_major(2, alloc::vec![4.0, 0.0, 0.0, 2.0]).unwrap();
        let x = Cholesky::factor(&a).unwrap().solve(&[1.0, 1.0]).unwrap();
        assert!((x[0] - 0.25).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = SymMat::from_row_major(2, alloc::vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(
            Cholesky::factor(&a).unwrap_err(),
            Error::NotPositiveDefinite
        );
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = alloc::vec![2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 1.0];
        let eig = symmetric_eigen(3, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += eig.vectors[k * 3 + i] * eig.values[k] * eig.vectors[k * 3 + j];
                }
                assert!((s - a[i * 3 + j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn jacobi_leaves_diagonal_untouched() {
        let a = alloc::vec![3.0, 0.0, 0.0, 1.0];
        let eig = symmetric_eigen(2, &a).unwrap();
        assert_eq!(eig.values, alloc::vec![3.0, 1.0]);
        assert_eq!(eig.vectors, alloc::vec![1.0, 0.0, 0.0, 1.0]);
    }
}
