//! The SPD manifold `P(n)` with its two Riemannian structures.
//!
//! * the affine-invariant metric `<A, B>_H = tr(H^-1 A H^-1 B)` with distance
//!   `d0(a, b) = sqrt(sum log^2 lambda_i)`, `lambda_i` the eigenvalues of `a^-1 b`;
//! * the volume-weighted (Ebin) metric, the affine-invariant one multiplied by
//!   the conformal factor `sqrt(det H)`.
//!
//! `P(n)` splits isometrically (for `d0`) as `P1(n) x R` through
//! `(x1, t) -> exp(t / sqrt(n)) * x1`, where `P1(n)` is the unit-determinant slice.

use std::ops::Deref;

use crate::error::{GeomError, Result};
use crate::linalg::{lower_solve, singular_values, whiten, Matrix, SymMatrix};

/// Eigenvalue ratio below which a matrix is not treated as positive definite.
pub const SPD_RATIO_TOL: f64 = 1e-12;

/// Tolerance on `|det - 1|` for unit-determinant matrices.
pub const UNIT_DET_TOL: f64 = 1e-10;

/// Symmetric positive-definite matrix, a point of `P(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(SymMatrix);

impl SpdMatrix {
    pub fn new(s: SymMatrix) -> Result<Self> {
        let e = s.eig()?;
        let min = e.eigenvalues[0];
        let max = *e.eigenvalues.last().expect("n >= 1");
        if !(max > 0.0) || !(min > SPD_RATIO_TOL * max) {
            return Err(GeomError::NotPositiveDefinite { min, max });
        }
        Ok(Self(s))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SymMatrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(SymMatrix::identity(n))
    }

    pub fn scaled_identity(n: usize, c: f64) -> Result<Self> {
        Self::new(SymMatrix::identity(n).scale(c))
    }

    pub fn diag(d: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::diag(d))
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    /// `log det`, computed from the Cholesky diagonal.
    pub fn log_det(&self) -> f64 {
        match self.0.cholesky() {
            Ok(l) => 2.0 * (0..self.n()).map(|i| l.get(i, i).ln()).sum::<f64>(),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.map_eigenvalues(|l| 1.0 / l).expect("eigendecomposition of an SPD matrix"))
    }

    /// Scales by a positive constant.
    pub fn scale(&self, c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "SPD scaling factor must be positive");
        Self(self.0.scale(c))
    }

    /// `g a g^T` for an invertible `g`.
    pub fn congruence(&self, g: &Matrix) -> Result<Self> {
        Self::new(g.congruence(&self.0))
    }

    pub fn cholesky(&self) -> Matrix {
        self.0.cholesky().expect("SPD matrix has a Cholesky factor")
    }
}

impl Deref for SpdMatrix {
    type Target = SymMatrix;
    fn deref(&self) -> &SymMatrix {
        &self.0
    }
}

/// SPD matrix with determinant one, a point of `P1(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDetSpd(SpdMatrix);

impl UnitDetSpd {
    pub fn new(a: SpdMatrix) -> Result<Self> {
        let det = a.det();
        if (det - 1.0).abs() > UNIT_DET_TOL {
            return Err(GeomError::NotUnitDeterminant { det });
        }
        Ok(Self(a))
    }

    /// Rescales an SPD matrix onto the unit-determinant slice: `a / det(a)^(1/n)`.
    pub fn normalize(a: &SpdMatrix) -> Self {
        let n = a.n() as f64;
        Self(a.scale((-a.log_det() / n).exp()))
    }

    pub fn identity(n: usize) -> Self {
        Self(SpdMatrix::identity(n))
    }

    pub fn as_spd(&self) -> &SpdMatrix {
        &self.0
    }

    pub fn into_spd(self) -> SpdMatrix {
        self.0
    }
}

impl Deref for UnitDetSpd {
    type Target = SpdMatrix;
    fn deref(&self) -> &SpdMatrix {
        &self.0
    }
}

/// Coordinates of the splitting `P(n) = P1(n) x R`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPoint {
    /// `log det / sqrt(n)`.
    pub t: f64,
    pub x1: UnitDetSpd,
}

/// Scalar function applied through the eigendecomposition by [`spd_fun`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpdFn {
    Log,
    Sqrt,
    InvSqrt,
    Inv,
}

/// Applies a scalar function to an SPD matrix spectrally.
pub fn spd_fun(a: &SpdMatrix, f: SpdFn) -> SymMatrix {
    let g: fn(f64) -> f64 = match f {
        SpdFn::Log => f64::ln,
        SpdFn::Sqrt => f64::sqrt,
        SpdFn::InvSqrt => |l| 1.0 / l.sqrt(),
        SpdFn::Inv => |l| 1.0 / l,
    };
    a.map_eigenvalues(g).expect("eigendecomposition of an SPD matrix")
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(GeomError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `tr(h^-1 a h^-1 b)`.
pub fn inner_affine(h: &SpdMatrix, a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dims(h.n(), a.n())?;
    check_dims(h.n(), b.n())?;
    let hinv = h.inverse();
    let left = hinv.as_matrix().mul(a.as_matrix());
    let right = hinv.as_matrix().mul(b.as_matrix());
    Ok(left.trace_of_product(&right))
}

/// The volume-weighted inner product `tr(h^-1 a h^-1 b) * sqrt(det h)`.
pub fn inner_ebin(h: &SpdMatrix, a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    Ok(inner_affine(h, a, b)? * (0.5 * h.log_det()).exp())
}

/// The inner product relative to a background metric `g0`:
/// `tr(h^-1 a h^-1 b) * sqrt(det(g0^-1 h))`. Equals [`inner_ebin`] for `g0 = I`.
pub fn inner_ebin_base(h: &SpdMatrix, a: &SymMatrix, b: &SymMatrix, g0: &SpdMatrix) -> Result<f64> {
    check_dims(h.n(), g0.n())?;
    Ok(inner_affine(h, a, b)? * (0.5 * (h.log_det() - g0.log_det())).exp())
}

/// Logarithms of the eigenvalues of `a^-1 b`, as `2 log sigma_i(L_a^-1 L_b)`.
///
/// The singular values of the Cholesky quotient carry the square root of the
/// conditioning of the whitened matrix `L_a^-1 b L_a^-T`.
fn relative_log_eigenvalues(a: &SpdMatrix, b: &SpdMatrix) -> Vec<f64> {
    let m = lower_solve(&a.cholesky(), &b.cholesky());
    singular_values(&m).expect("SVD of a non-singular matrix").iter().map(|s| 2.0 * s.ln()).collect()
}

/// Affine-invariant distance `sqrt(sum_i log^2 lambda_i(a^-1 b))`.
pub fn dist_affine(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_dims(a.n(), b.n())?;
    Ok(relative_log_eigenvalues(a, b).iter().map(|l| l * l).sum::<f64>().sqrt())
}

/// Point at parameter `s` on the affine-invariant geodesic from `a` to `b`.
///
/// Uses the Cholesky factor `a = L L^T`: `L (L^-1 b L^-T)^s L^T`.
pub fn geo_affine(a: &SpdMatrix, b: &SpdMatrix, s: f64) -> Result<SpdMatrix> {
    check_dims(a.n(), b.n())?;
    if s == 0.0 {
        return Ok(a.clone());
    }
    if s == 1.0 {
        return Ok(b.clone());
    }
    let l = a.cholesky();
    let w = whiten(&l, b);
    let ws = w.map_eigenvalues(|x| x.powf(s))?;
    SpdMatrix::new(l.congruence(&ws))
}

/// Geodesic within `P1(n)`; the slice is totally geodesic so only round-off
/// needs to be removed from the determinant.
pub fn geo_unit(a: &UnitDetSpd, b: &UnitDetSpd, s: f64) -> Result<UnitDetSpd> {
    if s == 0.0 {
        return Ok(a.clone());
    }
    if s == 1.0 {
        return Ok(b.clone());
    }
    Ok(UnitDetSpd::normalize(&geo_affine(a, b, s)?))
}

/// Riemannian logarithm of the affine-invariant metric: the initial velocity
/// at `x` of the unit-time geodesic to `y`.
pub fn log_affine(x: &SpdMatrix, y: &SpdMatrix) -> Result<SymMatrix> {
    check_dims(x.n(), y.n())?;
    let l = x.cholesky();
    let w = whiten(&l, y);
    Ok(l.congruence(&w.map_eigenvalues(f64::ln)?))
}

/// Riemannian exponential of the affine-invariant metric.
pub fn exp_affine(x: &SpdMatrix, v: &SymMatrix) -> Result<SpdMatrix> {
    check_dims(x.n(), v.n())?;
    let l = x.cholesky();
    let w = whiten(&l, v);
    SpdMatrix::new(l.congruence(&w.expm()?))
}

/// `a -> (t, x1)` with `t = log det(a) / sqrt(n)` and `x1 = exp(-t / sqrt(n)) a`.
pub fn split(a: &SpdMatrix) -> SplitPoint {
    let rn = (a.n() as f64).sqrt();
    let t = a.log_det() / rn;
    SplitPoint { t, x1: UnitDetSpd::normalize(a) }
}

/// Inverse of [`split`]: `exp(t / sqrt(n)) x1`.
pub fn join(p: &SplitPoint) -> SpdMatrix {
    let rn = (p.x1.n() as f64).sqrt();
    p.x1.scale((p.t / rn).exp())
}
