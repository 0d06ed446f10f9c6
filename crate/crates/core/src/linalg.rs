//! Small dense linear algebra for `n x n` matrices with `n` in the low tens.
//!
//! [`Matrix`] is a general square matrix used for intermediate products such as
//! `h^-1 a h^-1 b`. [`SymMatrix`] carries the symmetry invariant and is the type
//! the geometry works with. Eigendecompositions use cyclic Jacobi rotations.

use std::fmt;

use crate::error::{GeomError, Result};

/// Relative tolerance used when a symmetric matrix is built from raw entries.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Off-diagonal stopping tolerance of the Jacobi sweeps, relative to `||s||_F`.
pub const JACOBI_TOL: f64 = 1e-13;

/// Sweep cap of the Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Column-orthogonality tolerance of the one-sided Jacobi SVD.
pub const SVD_TOL: f64 = 1e-15;

/// Dense square matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.n)).finish()
    }
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data of length `n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(GeomError::Malformed("dimension must be at least 1".into()));
        }
        if data.len() != n * n {
            return Err(GeomError::Malformed(format!("expected {} entries for n = {n}, got {}", n * n, data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(GeomError::Malformed("non-finite entry".into()));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(GeomError::Malformed("matrix is not square".into()));
        }
        Self::from_row_major(n, rows.concat())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|x| x * c).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `tr(self * other)` without forming the product.
    pub fn trace_of_product(&self, other: &Self) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// LU factorization with partial pivoting. Returns the packed factors, the
    /// permutation and the sign of the permutation.
    fn lu(&self) -> Result<(Vec<f64>, Vec<usize>, f64)> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for col in 0..n {
            let pivot = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs())).unwrap_or(col);
            if a[pivot * n + col] == 0.0 {
                return Err(GeomError::Singular);
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                perm.swap(pivot, col);
                sign = -sign;
            }
            let d = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / d;
                a[row * n + col] = f;
                for j in col + 1..n {
                    a[row * n + j] -= f * a[col * n + j];
                }
            }
        }
        Ok((a, perm, sign))
    }

    pub fn det(&self) -> f64 {
        match self.lu() {
            Ok((a, _, sign)) => sign * (0..self.n).map(|i| a[i * self.n + i]).product::<f64>(),
            Err(_) => 0.0,
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let (a, perm, _) = self.lu()?;
        let mut inv = Self::zeros(n);
        for col in 0..n {
            // solve L U x = P e_col
            let mut x: Vec<f64> = perm.iter().map(|&p| if p == col { 1.0 } else { 0.0 }).collect();
            for i in 0..n {
                for k in 0..i {
                    x[i] -= a[i * n + k] * x[k];
                }
            }
            for i in (0..n).rev() {
                for k in i + 1..n {
                    x[i] -= a[i * n + k] * x[k];
                }
                x[i] /= a[i * n + i];
            }
            for i in 0..n {
                inv.data[i * n + col] = x[i];
            }
        }
        Ok(inv)
    }

    /// `g * s * g^T`.
    pub fn congruence(&self, s: &SymMatrix) -> SymMatrix {
        let prod = self.mul(&s.0).mul(&self.transpose());
        SymMatrix::symmetrize(prod)
    }
}

/// Symmetric `n x n` matrix. Entries satisfy `a[i][j] == a[j][i]` exactly.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl SymMatrix {
    /// Builds a symmetric matrix, rejecting asymmetry beyond `tol` relative to
    /// the largest entry and averaging away whatever asymmetry remains.
    pub fn with_tolerance(m: Matrix, tol: f64) -> Result<Self> {
        let n = m.n;
        let scale = m.data.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in i + 1..n {
                let gap = (m.get(i, j) - m.get(j, i)).abs();
                if gap > tol * scale {
                    return Err(GeomError::NotSymmetric { i, j, gap });
                }
            }
        }
        Ok(Self::symmetrize(m))
    }

    pub fn new(m: Matrix) -> Result<Self> {
        Self::with_tolerance(m, SYMMETRY_TOL)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// `(m + m^T) / 2`.
    pub fn symmetrize(mut m: Matrix) -> Self {
        let n = m.n;
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (m.get(i, j) + m.get(j, i));
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        Self(m)
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        Self(m)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0.rows()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(Matrix { n: self.n(), data: self.0.data.iter().zip(&other.0.data).map(|(a, b)| a + b).collect() })
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(Matrix { n: self.n(), data: self.0.data.iter().zip(&other.0.data).map(|(a, b)| a - b).collect() })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.scale(c))
    }

    /// `(1 - s) * self + s * other`, entrywise.
    pub fn lerp(&self, other: &Self, s: f64) -> Self {
        Self(Matrix {
            n: self.n(),
            data: self.0.data.iter().zip(&other.0.data).map(|(a, b)| (1.0 - s) * a + s * b).collect(),
        })
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// Coordinates on the upper triangle, `n(n+1)/2` of them, row by row.
    pub fn upper_coords(&self) -> Vec<f64> {
        let n = self.n();
        let mut v = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                v.push(self.get(i, j));
            }
        }
        v
    }

    pub fn from_upper_coords(n: usize, coords: &[f64]) -> Self {
        debug_assert_eq!(coords.len(), n * (n + 1) / 2);
        let mut m = Matrix::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m.set(i, j, coords[k]);
                m.set(j, i, coords[k]);
                k += 1;
            }
        }
        Self(m)
    }

    /// Eigendecomposition by cyclic Jacobi rotations.
    pub fn eig(&self) -> Result<SymEig> {
        sym_eig(self)
    }

    /// Applies `f` to the eigenvalues in the eigenbasis.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Ok(self.eig()?.reconstruct_with(f))
    }

    /// Matrix exponential.
    pub fn expm(&self) -> Result<Self> {
        self.map_eigenvalues(f64::exp)
    }

    /// Cholesky factor `L` with `self = L L^T`. Fails unless positive definite.
    pub fn cholesky(&self) -> Result<Matrix> {
        let n = self.n();
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(GeomError::NotPositiveDefinite { min: d, max: self.max_abs() });
            }
            let d = d.sqrt();
            l.set(j, j, d);
            for i in j + 1..n {
                let mut v = self.get(i, j);
                for k in 0..j {
                    v -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, v / d);
            }
        }
        Ok(l)
    }
}

/// Ascending eigenvalues and the orthonormal eigenvectors as columns of `basis`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub basis: Matrix,
}

impl SymEig {
    /// `basis * diag(f(lambda)) * basis^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.basis.n;
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.basis.get(i, k) * fl[k] * self.basis.get(j, k);
                }
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        SymMatrix(out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig(s: &SymMatrix) -> Result<SymEig> {
    let n = s.n();
    let mut a = s.0.data.clone();
    let mut v = Matrix::identity(n);
    let norm = s.frobenius_norm();
    let threshold = JACOBI_TOL * norm;

    let off = |a: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                acc += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        acc.sqrt()
    };

    let mut converged = off(&a) <= threshold;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(GeomError::EigenNoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - sn * vkq);
                    v.set(k, q, sn * vkp + c * vkq);
                }
            }
        }
        converged = off(&a) <= threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let eigenvalues = order.iter().map(|&i| a[i * n + i]).collect();
    let mut basis = Matrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            basis.set(row, col, v.get(row, src));
        }
    }
    Ok(SymEig { eigenvalues, basis })
}

/// Singular values of a square matrix, ascending, by one-sided (Hestenes)
/// Jacobi rotations. Small singular values keep high relative accuracy.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.n;
    // columns stored contiguously
    let mut u: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| m.get(i, j)).collect()).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = (dot(&u[p], &u[p]), dot(&u[q], &u[q]), dot(&u[p], &u[q]));
                if gamma == 0.0 || gamma.abs() <= SVD_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (head, tail) = u.split_at_mut(q);
                for (x, y) in head[p].iter_mut().zip(tail[0].iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            let mut sv: Vec<f64> = u.iter().map(|c| dot(c, c).sqrt()).collect();
            sv.sort_by(f64::total_cmp);
            return Ok(sv);
        }
    }
    Err(GeomError::EigenNoConvergence { sweeps: JACOBI_MAX_SWEEPS })
}

/// Solves `l x = b` for lower-triangular `l`, column by column: returns `l^-1 b`.
pub fn lower_solve(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.n;
    let mut x = b.clone();
    for col in 0..n {
        for i in 0..n {
            let mut v = x.get(i, col);
            for k in 0..i {
                v -= l.get(i, k) * x.get(k, col);
            }
            x.set(i, col, v / l.get(i, i));
        }
    }
    x
}

/// `l^-1 s l^-T` for lower-triangular `l`.
pub fn whiten(l: &Matrix, s: &SymMatrix) -> SymMatrix {
    let left = lower_solve(l, &s.0);
    let both = lower_solve(l, &left.transpose());
    SymMatrix::symmetrize(both)
}
