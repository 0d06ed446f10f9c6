//! The completion of `P(n)` under the volume-weighted metric.
//!
//! Writing `a = exp(t / sqrt(n)) x1` with `det x1 = 1`, the conformal factor
//! `sqrt(det a) = exp(t sqrt(n) / 2)` multiplies the flat metric `dt^2 + ds1^2`.
//! The substitution `r = (4 / sqrt(n)) exp(t sqrt(n) / 4)` turns this into
//!
//! ```text
//! ds^2 = dr^2 + (n / 16) r^2 ds1^2
//! ```
//!
//! which is the Euclidean cone over `P1(n)` with its affine-invariant distance
//! scaled by `sqrt(n) / 4`. The ray `t -> -inf` closes up at a single apex, and
//! the completed space is the full cone. Distances follow the planar law of
//! cosines with the cone angle clamped at `pi`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::error::{GeomError, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::spd::{dist_affine, exp_affine, geo_unit, inner_affine, log_affine, spd_fun, SpdFn, SpdMatrix, UnitDetSpd};

/// Iteration cap of the Frechet mean.
pub const MEAN_MAX_ITERATIONS: usize = 200;

/// Stopping tolerance of the Frechet mean, relative to the weighted mean radius.
pub const MEAN_TOL: f64 = 1e-9;

/// Radius, relative to the weighted mean radius, of the restart point used
/// when a mean iterate reaches the apex.
const APEX_RESTART: f64 = 1e-6;

/// Number of times the Frechet mean may restart off the apex.
const APEX_MAX_RESTARTS: usize = 8;

/// Sufficient-decrease fraction of the backtracking line search.
const ARMIJO: f64 = 0.25;

/// Finite-difference step of the mean's Newton model, relative to the radius.
const NEWTON_FD_STEP: f64 = 1e-4;

/// Relative change of the mean objective below which objective comparisons
/// are round-off; steps are then judged by the residual instead.
const RESOLVABLE_DECREASE: f64 = 1e-12;

/// Factor `sqrt(n) / 4` converting affine distances on `P1(n)` into cone angles.
#[inline]
pub fn angle_scale(n: usize) -> f64 {
    (n as f64).sqrt() / 4.0
}

/// Cone radius of an SPD matrix from its log-determinant.
#[inline]
pub fn radius_from_log_det(n: usize, log_det: f64) -> f64 {
    4.0 / (n as f64).sqrt() * (0.25 * log_det).exp()
}

/// Point of the completed cone.
#[derive(Debug, Clone, PartialEq)]
pub enum ConePoint {
    /// The point added at `t = -inf`: totally degenerate metrics.
    Apex,
    Ray {
        r: f64,
        x1: UnitDetSpd,
    },
}

impl ConePoint {
    pub fn ray(r: f64, x1: UnitDetSpd) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(GeomError::Malformed(format!("cone radius must be positive and finite, got {r}")));
        }
        Ok(Self::Ray { r, x1 })
    }

    pub fn is_apex(&self) -> bool {
        matches!(self, Self::Apex)
    }

    /// Distance to the apex.
    pub fn radius(&self) -> f64 {
        match self {
            Self::Apex => 0.0,
            Self::Ray { r, .. } => *r,
        }
    }

    /// Matrix dimension, `None` for the apex.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Apex => None,
            Self::Ray { x1, .. } => Some(x1.n()),
        }
    }

    pub fn direction(&self) -> Option<&UnitDetSpd> {
        match self {
            Self::Apex => None,
            Self::Ray { x1, .. } => Some(x1),
        }
    }
}

/// Which branch of the cone distance formula applies to a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistBranch {
    /// At least one point is the apex.
    Apex,
    /// Angle below `pi`: the pair develops onto a planar sector.
    Sector,
    /// Angle at least `pi`: the geodesic runs through the apex.
    ThroughApex,
}

/// Maps an SPD matrix to the cone: `r = (4 / sqrt(n)) det(a)^(1/4)`,
/// `x1 = a / det(a)^(1/n)`.
pub fn embed(a: &SpdMatrix) -> ConePoint {
    let n = a.n();
    ConePoint::Ray { r: radius_from_log_det(n, a.log_det()), x1: UnitDetSpd::normalize(a) }
}

/// Inverse of [`embed`]. The apex has no matrix.
pub fn to_matrix(p: &ConePoint) -> Result<SpdMatrix> {
    match p {
        ConePoint::Apex => Err(GeomError::ApexHasNoMatrix),
        ConePoint::Ray { r, x1 } => {
            let n = x1.n() as f64;
            let log_det = 4.0 * (r * n.sqrt() / 4.0).ln();
            Ok(x1.scale((log_det / n).exp()))
        }
    }
}

fn check_same_dim(x: &UnitDetSpd, y: &UnitDetSpd) {
    assert_eq!(x.n(), y.n(), "cone points of different dimensions");
}

/// Unclamped cone angle between two directions. The pair is put in a fixed
/// order first so the result is exactly symmetric.
fn entry_order(x: &UnitDetSpd, y: &UnitDetSpd) -> Ordering {
    x.as_matrix()
        .as_slice()
        .iter()
        .zip(y.as_matrix().as_slice())
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

// evaluated in a canonical order so the result is exactly symmetric
fn fiber_angle(x: &UnitDetSpd, y: &UnitDetSpd) -> f64 {
    check_same_dim(x, y);
    let (a, b) = match entry_order(x, y) {
        Ordering::Equal => return 0.0,
        Ordering::Greater => (y, x),
        Ordering::Less => (x, y),
    };
    angle_scale(x.n()) * dist_affine(a, b).expect("matching dimensions")
}

fn point_order(p: &ConePoint, q: &ConePoint) -> Ordering {
    match (p, q) {
        (ConePoint::Apex, ConePoint::Apex) => Ordering::Equal,
        (ConePoint::Apex, _) => Ordering::Less,
        (_, ConePoint::Apex) => Ordering::Greater,
        (ConePoint::Ray { r: rp, x1 }, ConePoint::Ray { r: rq, x1: y1 }) => {
            rp.total_cmp(rq).then_with(|| entry_order(x1, y1))
        }
    }
}

/// Cone angle `(sqrt(n) / 4) d0(x1, y1)` between two rays.
pub fn angle(p: &ConePoint, q: &ConePoint) -> Result<f64> {
    match (p, q) {
        (ConePoint::Ray { x1, .. }, ConePoint::Ray { x1: y1, .. }) => {
            if x1.n() != y1.n() {
                return Err(GeomError::DimensionMismatch { expected: x1.n(), got: y1.n() });
            }
            Ok(fiber_angle(x1, y1))
        }
        _ => Err(GeomError::ApexInput("angle")),
    }
}

/// Branch of the distance formula used for `(p, q)`.
pub fn dist_branch(p: &ConePoint, q: &ConePoint) -> DistBranch {
    match (p, q) {
        (ConePoint::Ray { x1, .. }, ConePoint::Ray { x1: y1, .. }) => {
            if fiber_angle(x1, y1) >= PI {
                DistBranch::ThroughApex
            } else {
                DistBranch::Sector
            }
        }
        _ => DistBranch::Apex,
    }
}

/// Planar law of cosines in the cancellation-free form
/// `(r_p - r_q)^2 + 4 r_p r_q sin^2(theta / 2)`, with `theta` clamped at `pi`.
#[inline]
fn law_of_cosines(rp: f64, rq: f64, theta: f64) -> f64 {
    if theta >= PI {
        return rp + rq;
    }
    let h = (0.5 * theta).sin();
    ((rp - rq).powi(2) + 4.0 * rp * rq * h * h).sqrt()
}

/// Distance in the completed cone.
///
/// Panics if both points are rays of different dimensions.
pub fn dist_cone(p: &ConePoint, q: &ConePoint) -> f64 {
    match (p, q) {
        (ConePoint::Apex, ConePoint::Apex) => 0.0,
        (ConePoint::Apex, ConePoint::Ray { r, .. }) | (ConePoint::Ray { r, .. }, ConePoint::Apex) => *r,
        (ConePoint::Ray { r: rp, x1 }, ConePoint::Ray { r: rq, x1: y1 }) => {
            law_of_cosines(*rp, *rq, fiber_angle(x1, y1))
        }
    }
}

/// Point at parameter `s` of the constant-speed geodesic from `p` to `q`.
pub fn geodesic_cone(p: &ConePoint, q: &ConePoint, s: f64) -> ConePoint {
    if s <= 0.0 {
        return p.clone();
    }
    if s >= 1.0 {
        return q.clone();
    }
    match (p, q) {
        (ConePoint::Apex, ConePoint::Apex) => ConePoint::Apex,
        (ConePoint::Apex, ConePoint::Ray { r, x1 }) => ConePoint::Ray { r: s * r, x1: x1.clone() },
        (ConePoint::Ray { r, x1 }, ConePoint::Apex) => ConePoint::Ray { r: (1.0 - s) * r, x1: x1.clone() },
        (ConePoint::Ray { r: rp, x1 }, ConePoint::Ray { r: rq, x1: y1 }) => {
            let theta = fiber_angle(x1, y1);
            if theta >= PI {
                through_apex(*rp, x1, *rq, y1, s)
            } else if theta == 0.0 {
                ConePoint::Ray { r: (1.0 - s) * rp + s * rq, x1: x1.clone() }
            } else {
                let (px, qx, qy) = (*rp, rq * theta.cos(), rq * theta.sin());
                let rx = px + s * (qx - px);
                let ry = s * qy;
                let radius = rx.hypot(ry);
                let alpha = ry.atan2(rx).clamp(0.0, theta);
                let fiber = geo_unit(x1, y1, alpha / theta).expect("geodesic between unit-determinant matrices");
                ConePoint::Ray { r: radius, x1: fiber }
            }
        }
    }
}

/// Arc-length parametrized concatenation of the two radial segments.
fn through_apex(rp: f64, x1: &UnitDetSpd, rq: f64, y1: &UnitDetSpd, s: f64) -> ConePoint {
    let travelled = s * (rp + rq);
    if travelled < rp {
        ConePoint::Ray { r: rp - travelled, x1: x1.clone() }
    } else if travelled == rp {
        ConePoint::Apex
    } else {
        ConePoint::Ray { r: travelled - rp, x1: y1.clone() }
    }
}

/// Midpoint of the geodesic; exactly symmetric in its arguments.
pub fn midpoint(p: &ConePoint, q: &ConePoint) -> ConePoint {
    if point_order(p, q) == Ordering::Greater {
        geodesic_cone(q, p, 0.5)
    } else {
        geodesic_cone(p, q, 0.5)
    }
}

/// Tangent vector at a ray point in (radial, angular) coordinates.
///
/// The angular part is a symmetric matrix tangent to `P1(n)` at `x1`, so
/// `tr(x1^-1 angular) = 0`, and the squared norm is
/// `radial^2 + (n / 16) r^2 <angular, angular>_{x1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeTangent {
    pub base_r: f64,
    pub base_x1: UnitDetSpd,
    pub radial: f64,
    pub angular: SymMatrix,
}

impl ConeTangent {
    pub fn zero(r: f64, x1: &UnitDetSpd) -> Self {
        Self { base_r: r, base_x1: x1.clone(), radial: 0.0, angular: SymMatrix::zeros(x1.n()) }
    }

    /// Norm of the angular part measured in the affine metric of `P1(n)`.
    pub fn angular_fiber_norm(&self) -> f64 {
        inner_affine(&self.base_x1, &self.angular, &self.angular).expect("matching dimensions").max(0.0).sqrt()
    }

    /// Tangential speed in the planar development, `r * (sqrt(n) / 4) |angular|`.
    fn planar_tangential(&self) -> f64 {
        self.base_r * angle_scale(self.base_x1.n()) * self.angular_fiber_norm()
    }

    pub fn norm(&self) -> f64 {
        self.radial.hypot(self.planar_tangential())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { radial: c * self.radial, angular: self.angular.scale(c), ..self.clone() }
    }

    /// Sum of two tangents at the same base point.
    pub fn add(&self, other: &Self) -> Self {
        Self { radial: self.radial + other.radial, angular: self.angular.add(&other.angular), ..self.clone() }
    }

    /// `tr(x1^-1 angular)`, zero for genuine tangents.
    pub fn trace_defect(&self) -> f64 {
        self.base_x1.inverse().as_matrix().trace_of_product(self.angular.as_matrix())
    }
}

/// Initial velocity at `x` of the unit-time geodesic from `x` to `p`.
///
/// When `p` is the apex or the angle is at least `pi` the geodesic runs
/// radially into the apex and the tangent is purely radial.
pub fn log_map(x: &ConePoint, p: &ConePoint) -> Result<ConeTangent> {
    let (rx, x1) = match x {
        ConePoint::Apex => return Err(GeomError::ApexInput("log_map base point")),
        ConePoint::Ray { r, x1 } => (*r, x1),
    };
    let mut v = ConeTangent::zero(rx, x1);
    match p {
        ConePoint::Apex => v.radial = -rx,
        ConePoint::Ray { r: rp, x1: y1 } => {
            if y1.n() != x1.n() {
                return Err(GeomError::DimensionMismatch { expected: x1.n(), got: y1.n() });
            }
            let theta = fiber_angle(x1, y1);
            if theta >= PI {
                v.radial = -(rx + rp);
            } else if theta == 0.0 {
                v.radial = rp - rx;
            } else {
                let vx = rp * theta.cos() - rx;
                let vy = rp * theta.sin();
                v.radial = vx;
                v.angular = log_affine(x1, y1)?.scale(vy / (rx * theta));
            }
        }
    }
    Ok(v)
}

/// Endpoint of the unit-time geodesic leaving `v.base` with velocity `v`.
///
/// A purely radial velocity that reaches or overshoots the apex returns the
/// apex: beyond it the continuation is not unique.
pub fn exp_map(v: &ConeTangent) -> ConePoint {
    let rx = v.base_r;
    let fiber_norm = v.angular_fiber_norm();
    let omega = rx * angle_scale(v.base_x1.n()) * fiber_norm;
    let ex = rx + v.radial;
    if omega == 0.0 {
        return if ex > 0.0 { ConePoint::Ray { r: ex, x1: v.base_x1.clone() } } else { ConePoint::Apex };
    }
    let radius = ex.hypot(omega);
    let phi = omega.atan2(ex);
    let fiber_len = phi / angle_scale(v.base_x1.n());
    let step = v.angular.scale(fiber_len / fiber_norm);
    let fiber = exp_affine(&v.base_x1, &step).expect("exponential of a symmetric tangent");
    ConePoint::Ray { r: radius, x1: UnitDetSpd::normalize(&fiber) }
}

/// Result of [`frechet_mean`].
#[derive(Debug, Clone)]
pub struct FrechetMean {
    pub point: ConePoint,
    /// First-order residual: `|sum w_i log_m(p_i)|` at a ray, or the steepest
    /// descent rate out of the apex over the probed directions.
    pub residual: f64,
    pub iterations: usize,
    /// Weighted mean radius of the inputs, the scale of the tolerances.
    pub scale: f64,
}

/// `sum_i w_i d(m, p_i)^2`.
pub fn mean_objective(m: &ConePoint, points: &[ConePoint], weights: &[f64]) -> f64 {
    points.iter().zip(weights).map(|(p, w)| w * dist_cone(m, p).powi(2)).sum()
}

/// `sum_i w_i log_m(p_i)`, half the negative gradient of [`mean_objective`].
pub fn mean_gradient(m: &ConePoint, points: &[ConePoint], weights: &[f64]) -> Result<ConeTangent> {
    let (r, x1) = match m {
        ConePoint::Apex => return Err(GeomError::ApexInput("mean_gradient base point")),
        ConePoint::Ray { r, x1 } => (*r, x1),
    };
    let mut g = ConeTangent::zero(r, x1);
    for (p, &w) in points.iter().zip(weights) {
        if w > 0.0 {
            g = g.add(&log_map(m, p)?.scale(w));
        }
    }
    Ok(g)
}

/// Rate `sum_i w_i r_i cos(min(pi, angle(dir, p_i)))` at which the objective
/// decreases (up to a factor 2) when leaving the apex along `dir`.
fn apex_escape_rate(dir: &UnitDetSpd, points: &[ConePoint], weights: &[f64]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| match p {
            ConePoint::Apex => 0.0,
            ConePoint::Ray { r, x1 } => w * r * fiber_angle(dir, x1).min(PI).cos(),
        })
        .sum()
}

/// Best escape direction out of the apex among the input directions and
/// `extra`, with its rate.
fn best_apex_escape(points: &[ConePoint], weights: &[f64], extra: Option<&UnitDetSpd>) -> Option<(UnitDetSpd, f64)> {
    points
        .iter()
        .filter_map(ConePoint::direction)
        .chain(extra)
        .map(|d| (d.clone(), apex_escape_rate(d, points, weights)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Orthonormal basis of the tangent space at the ray `(r, x1)`: the radial
/// unit vector, then `x1^(1/2) E x1^(1/2) / (r sqrt(n) / 4)` for an
/// orthonormal basis `E` of traceless symmetric matrices.
fn tangent_basis(r: f64, x1: &UnitDetSpd) -> Vec<ConeTangent> {
    let n = x1.n();
    let root = spd_fun(x1.as_spd(), SpdFn::Sqrt);
    let unit = |e: SymMatrix| ConeTangent {
        base_r: r,
        base_x1: x1.clone(),
        radial: 0.0,
        angular: root.as_matrix().congruence(&e).scale(1.0 / (r * angle_scale(n))),
    };
    let mut basis = vec![ConeTangent { radial: 1.0, ..ConeTangent::zero(r, x1) }];
    for k in 1..n {
        // Helmert contrasts on the diagonal
        let c = 1.0 / ((k * (k + 1)) as f64).sqrt();
        let mut d = vec![0.0; n];
        d[..k].fill(c);
        d[k] = -(k as f64) * c;
        basis.push(unit(SymMatrix::diag(&d)));
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut e = Matrix::zeros(n);
            e.set(i, j, std::f64::consts::FRAC_1_SQRT_2);
            e.set(j, i, std::f64::consts::FRAC_1_SQRT_2);
            basis.push(unit(SymMatrix::symmetrize(e)));
        }
    }
    basis
}

/// Inner product of two tangents at the same ray.
fn tangent_inner(a: &ConeTangent, b: &ConeTangent) -> f64 {
    let s = a.base_r * angle_scale(a.base_x1.n());
    a.radial * b.radial + s * s * inner_affine(a.base_x1.as_spd(), &a.angular, &b.angular).unwrap_or(0.0)
}

/// Newton step for the mean objective at the ray `m`, whose descent vector
/// (half the negative gradient) is `g`. The Hessian is taken by central
/// differences of the objective in normal coordinates; `None` unless it is
/// positive definite.
fn mean_newton_step(m: &ConePoint, g: &ConeTangent, points: &[ConePoint], weights: &[f64]) -> Option<ConeTangent> {
    let ConePoint::Ray { r, x1 } = m else { return None };
    let basis = tangent_basis(*r, x1);
    let dim = basis.len();
    let coords: Vec<f64> = basis.iter().map(|e| tangent_inner(g, e)).collect();
    let h = NEWTON_FD_STEP * r;
    let at = |v: &[(usize, f64)]| {
        let t = v.iter().fold(ConeTangent::zero(*r, x1), |t, &(j, c)| t.add(&basis[j].scale(c)));
        mean_objective(&exp_map(&t), points, weights)
    };
    let f0 = mean_objective(m, points, weights);
    let mut hess = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        hess[j][j] = (at(&[(j, h)]) - 2.0 * f0 + at(&[(j, -h)])) / (h * h);
        for k in 0..j {
            let v = (at(&[(j, h), (k, h)]) - at(&[(j, h), (k, -h)]) - at(&[(j, -h), (k, h)]) + at(&[(j, -h), (k, -h)]))
                / (4.0 * h * h);
            hess[j][k] = v;
            hess[k][j] = v;
        }
    }
    let l = SymMatrix::from_rows(&hess).ok()?.cholesky().ok()?;
    // H p = 2 coords (the gradient of the objective is -2 g)
    let mut y = vec![0.0; dim];
    for i in 0..dim {
        let v = 2.0 * coords[i] - (0..i).map(|k| l.get(i, k) * y[k]).sum::<f64>();
        y[i] = v / l.get(i, i);
    }
    let mut p = vec![0.0; dim];
    for i in (0..dim).rev() {
        let v = y[i] - (i + 1..dim).map(|k| l.get(k, i) * p[k]).sum::<f64>();
        p[i] = v / l.get(i, i);
    }
    if p.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(p.iter().zip(&basis).fold(ConeTangent::zero(*r, x1), |t, (c, e)| t.add(&e.scale(*c))))
}

/// First-order residual of a candidate mean.
pub fn mean_residual(m: &ConePoint, points: &[ConePoint], weights: &[f64]) -> Result<f64> {
    match m {
        ConePoint::Apex => Ok(best_apex_escape(points, weights, None).map_or(0.0, |(_, rate)| rate.max(0.0))),
        ConePoint::Ray { .. } => Ok(mean_gradient(m, points, weights)?.norm()),
    }
}

fn check_weights(k: usize, weights: &[f64]) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(GeomError::InvalidWeights("at least one point is required".into()));
    }
    if weights.len() != k {
        return Err(GeomError::InvalidWeights(format!("{} weights for {k} points", weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(GeomError::InvalidWeights("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(GeomError::InvalidWeights("weights sum to zero".into()));
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(GeomError::InvalidWeights(format!("weights sum to {total}, expected 1")));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Weighted Frechet mean (barycenter) by geodesic gradient descent.
///
/// Each iteration steps along a Newton direction when the local Hessian is
/// positive definite, and along the Karcher vector `sum_i w_i log_m(p_i)`
/// otherwise, halving the step until the decrease is sufficient. Once the
/// iterate is no better than the apex, the apex is tested for optimality and
/// otherwise the iteration restarts at the radial optimum along the best
/// escape direction.
pub fn frechet_mean(points: &[ConePoint], weights: &[f64]) -> Result<FrechetMean> {
    let weights = check_weights(points.len(), weights)?;
    let dims: Vec<usize> = points.iter().filter_map(ConePoint::dim).collect();
    if let Some(&n) = dims.first() {
        if let Some(&bad) = dims.iter().find(|&&d| d != n) {
            return Err(GeomError::DimensionMismatch { expected: n, got: bad });
        }
    }
    let scale: f64 = points.iter().zip(&weights).map(|(p, w)| w * p.radius()).sum();
    if scale == 0.0 {
        return Ok(FrechetMean { point: ConePoint::Apex, residual: 0.0, iterations: 0, scale });
    }
    let tol = MEAN_TOL * scale;

    let heaviest = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .expect("non-empty");
    let mut m = points[heaviest].clone();
    let mut restarts = 0;
    if m.is_apex() {
        let (dir, _) = best_apex_escape(points, &weights, None).expect("some point is a ray");
        m = ConePoint::Ray { r: APEX_RESTART * scale, x1: dir };
    }

    let f_apex = mean_objective(&ConePoint::Apex, points, &weights);
    let mut f = mean_objective(&m, points, &weights);
    for iteration in 0..MEAN_MAX_ITERATIONS {
        let g = mean_gradient(&m, points, &weights)?;
        let gnorm = g.norm();
        if gnorm <= tol {
            return Ok(FrechetMean { point: m, residual: gnorm, iterations: iteration, scale });
        }
        // No better than the apex: either the apex is the mean, or the
        // iterate drifted onto the plateau where all directions look alike
        // and must jump to the radial optimum along the best escape.
        if f_apex <= f {
            let (dir, rate) = best_apex_escape(points, &weights, m.direction()).expect("some point is a ray");
            if rate <= 0.0 {
                return Ok(FrechetMean { point: ConePoint::Apex, residual: 0.0, iterations: iteration, scale });
            }
            if restarts < APEX_MAX_RESTARTS {
                restarts += 1;
                m = ConePoint::Ray { r: rate, x1: dir };
                f = mean_objective(&m, points, &weights);
                continue;
            }
        }

        let mut step = 1.0;
        let mut next = exp_map(&g);
        if next.is_apex() {
            let (dir, rate) = best_apex_escape(points, &weights, m.direction()).expect("some point is a ray");
            if rate <= 0.0 && f_apex <= f {
                return Ok(FrechetMean { point: ConePoint::Apex, residual: 0.0, iterations: iteration + 1, scale });
            }
            if restarts == APEX_MAX_RESTARTS {
                break;
            }
            restarts += 1;
            m = ConePoint::Ray { r: rate.max(APEX_RESTART * scale), x1: dir };
            f = mean_objective(&m, points, &weights);
            continue;
        }
        // Newton where the objective is locally convex, gradient otherwise
        let (dir, slope) = match mean_newton_step(&m, &g, points, &weights) {
            Some(p) if !exp_map(&p).is_apex() && tangent_inner(&g, &p) > 0.0 => {
                let slope = 2.0 * tangent_inner(&g, &p);
                (p, slope)
            }
            _ => (g.clone(), 2.0 * gnorm * gnorm),
        };
        next = exp_map(&dir);
        if gnorm * gnorm <= RESOLVABLE_DECREASE * f {
            // the objective is flat to round-off here; its gradient is not
            let mut r_next = mean_residual(&next, points, &weights)?;
            while r_next >= gnorm && step > 1e-12 {
                step *= 0.5;
                next = exp_map(&dir.scale(step));
                r_next = mean_residual(&next, points, &weights)?;
            }
            if r_next >= gnorm {
                break;
            }
            m = next;
            f = mean_objective(&m, points, &weights);
            continue;
        }
        // sufficient decrease keeps stiff directions from oscillating
        let enough = |f_next: f64, step: f64| f_next <= f - ARMIJO * step * slope;
        let mut f_next = mean_objective(&next, points, &weights);
        while !enough(f_next, step) && step > 1e-12 {
            step *= 0.5;
            next = exp_map(&dir.scale(step));
            f_next = mean_objective(&next, points, &weights);
        }
        if !enough(f_next, step) {
            break;
        }
        m = next;
        f = f_next;
    }

    let residual = mean_residual(&m, points, &weights)?;
    if residual <= tol {
        return Ok(FrechetMean { point: m, residual, iterations: MEAN_MAX_ITERATIONS, scale });
    }
    Err(GeomError::MeanNoConvergence { iterations: MEAN_MAX_ITERATIONS, residual })
}

/// A genuine SPD matrix within `eps` of `p`: the matrix of `p` itself for a ray,
/// or a small multiple of the identity at cone radius `eps / 2` for the apex.
pub fn approximate_by_positive(p: &ConePoint, eps: f64, n: usize) -> Result<SpdMatrix> {
    if !(eps > 0.0) {
        return Err(GeomError::Malformed(format!("approximation tolerance must be positive, got {eps}")));
    }
    match p {
        ConePoint::Ray { .. } => to_matrix(p),
        ConePoint::Apex => {
            // (4 / sqrt(n)) c^(n/4) = eps / 2
            let nf = n as f64;
            let c = (eps * nf.sqrt() / 8.0).powf(4.0 / nf);
            SpdMatrix::scaled_identity(n, c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    fn unit(rows: &[Vec<f64>]) -> UnitDetSpd {
        UnitDetSpd::normalize(&SpdMatrix::from_rows(rows).unwrap())
    }

    /// Unit-determinant diagonal matrix at affine distance `d` from I, which
    /// sits at cone angle `theta` from I when n = 2.
    fn at_angle(theta: f64) -> UnitDetSpd {
        let d = theta / angle_scale(2);
        let u = d / SQRT_2;
        UnitDetSpd::new(SpdMatrix::diag(&[u.exp(), (-u).exp()]).unwrap()).unwrap()
    }

    fn ray(r: f64, x1: &UnitDetSpd) -> ConePoint {
        ConePoint::ray(r, x1.clone()).unwrap()
    }

    #[test]
    fn embed_examples() {
        let p = embed(&SpdMatrix::identity(2));
        assert!(rel(p.radius(), 2.0 * SQRT_2) < 1e-15);
        assert_eq!(p.direction().unwrap().as_sym(), &SymMatrix::identity(2));

        let u = unit(&[vec![2.0, 0.3], vec![0.3, 0.7]]);
        let p = embed(&u);
        assert!(rel(p.radius(), 4.0 / SQRT_2) < 1e-12);

        let p = embed(&SpdMatrix::diag(&[16.0, 1.0]).unwrap());
        assert!(rel(p.radius(), 4.0 * SQRT_2) < 1e-15);
        let x1 = p.direction().unwrap();
        assert!(x1.sub(&SymMatrix::diag(&[4.0, 0.25])).frobenius_norm() < 1e-14);
    }

    #[test]
    fn to_matrix_inverts_embed() {
        for a in [
            SpdMatrix::identity(2),
            SpdMatrix::diag(&[16.0, 1.0]).unwrap(),
            SpdMatrix::from_rows(&[vec![3.0, 1.0, 0.2], vec![1.0, 2.0, -0.4], vec![0.2, -0.4, 1.5]]).unwrap(),
        ] {
            let back = to_matrix(&embed(&a)).unwrap();
            assert!(back.sub(&a).frobenius_norm() < 1e-12 * a.frobenius_norm());
        }
        assert_eq!(to_matrix(&ConePoint::Apex), Err(GeomError::ApexHasNoMatrix));
    }

    #[test]
    fn angle_examples() {
        let x = at_angle(0.0);
        let p = ray(1.0, &x);
        assert_eq!(angle(&p, &ray(3.0, &x)).unwrap(), 0.0);
        let q = ray(1.0, &UnitDetSpd::new(SpdMatrix::diag(&[2.0, 0.5]).unwrap()).unwrap());
        assert!(rel(angle(&q, &p).unwrap(), 2f64.ln() / 2.0) < 1e-14);
        assert_eq!(angle(&q, &p).unwrap(), angle(&p, &q).unwrap());
        assert!(angle(&p, &ConePoint::Apex).is_err());
    }

    #[test]
    fn dist_cone_examples() {
        let x = at_angle(0.0);
        assert_eq!(dist_cone(&ConePoint::Apex, &ray(3.0, &x)), 3.0);
        assert_eq!(dist_cone(&ConePoint::Apex, &ConePoint::Apex), 0.0);
        assert_eq!(dist_cone(&ray(1.0, &x), &ray(3.0, &x)), 2.0);
        let y = at_angle(PI + 0.1);
        assert_eq!(dist_branch(&ray(1.0, &x), &ray(2.0, &y)), DistBranch::ThroughApex);
        assert_eq!(dist_cone(&ray(1.0, &x), &ray(2.0, &y)), 3.0);
        let y = at_angle(PI);
        assert_eq!(dist_cone(&ray(1.0, &x), &ray(2.0, &y)), 3.0);
        // shared ray: (4 / sqrt n) |det_a^(1/4) - det_b^(1/4)|
        let a = embed(&SpdMatrix::identity(2));
        let b = embed(&SpdMatrix::scaled_identity(2, 16.0).unwrap());
        assert!(rel(dist_cone(&a, &b), 4.0 / SQRT_2 * (4.0 - 1.0)) < 1e-14);
    }

    #[test]
    fn right_angle_sector() {
        let x = at_angle(0.0);
        let y = at_angle(FRAC_PI_2);
        let (p, q) = (ray(2.0, &x), ray(2.0, &y));
        assert!(rel(angle(&p, &q).unwrap(), FRAC_PI_2) < 1e-14);
        assert!(rel(dist_cone(&p, &q), 2.0 * SQRT_2) < 1e-14);
        let m = midpoint(&p, &q);
        assert!(rel(m.radius(), SQRT_2) < 1e-14);
        let fiber = geo_unit(&x, &y, 0.5).unwrap();
        assert!(m.direction().unwrap().sub(&fiber).frobenius_norm() < 1e-12);
        assert!(rel(dist_cone(&p, &m), SQRT_2) < 1e-12);
    }

    #[test]
    fn geodesic_examples() {
        let x = at_angle(0.0);
        let m = midpoint(&ConePoint::Apex, &ray(2.0, &x));
        assert_eq!(m, ray(1.0, &x));
        assert_eq!(midpoint(&ray(1.0, &x), &ray(1.0, &x)), ray(1.0, &x));
        let p = ray(1.0, &x);
        let q = ray(3.0, &at_angle(1.0));
        assert_eq!(geodesic_cone(&p, &q, 0.0), p);
        assert_eq!(geodesic_cone(&p, &q, 1.0), q);
    }

    #[test]
    fn through_apex_geodesic() {
        let x = at_angle(0.0);
        let y = at_angle(PI + 0.5);
        let p = ray(1.0, &x);
        let q = ray(3.0, &y);
        assert_eq!(geodesic_cone(&p, &q, 0.25), ConePoint::Apex);
        let a = geodesic_cone(&p, &q, 0.125);
        assert_eq!(a, ray(0.5, &x));
        let b = geodesic_cone(&p, &q, 0.5);
        assert_eq!(b, ray(1.0, &y));
        // tie at exactly pi goes through the apex
        let (p, q) = (ray(2.0, &x), ray(2.0, &at_angle(PI)));
        assert_eq!(midpoint(&p, &q), ConePoint::Apex);
    }

    #[test]
    fn log_map_examples() {
        let x = at_angle(0.0);
        let p = ray(1.0, &x);
        let v = log_map(&p, &p).unwrap();
        assert_eq!(v.radial, 0.0);
        assert_eq!(v.angular.frobenius_norm(), 0.0);
        let v = log_map(&p, &ray(3.0, &x)).unwrap();
        assert_eq!(v.radial, 2.0);
        assert_eq!(v.angular.frobenius_norm(), 0.0);
        let v = log_map(&p, &ConePoint::Apex).unwrap();
        assert_eq!(v.radial, -1.0);
        assert!(log_map(&ConePoint::Apex, &p).is_err());

        let q = ray(2.5, &unit(&[vec![2.0, 0.3], vec![0.3, 0.7]]));
        let v = log_map(&p, &q).unwrap();
        assert!(rel(v.norm(), dist_cone(&p, &q)) < 1e-12);
        assert!(v.trace_defect().abs() < 1e-12);
        let back = exp_map(&v);
        assert!(dist_cone(&back, &q) < 1e-12);
    }

    #[test]
    fn exp_map_hits_apex_radially() {
        let x = at_angle(0.0);
        let mut v = ConeTangent::zero(1.0, &x);
        v.radial = -1.5;
        assert_eq!(exp_map(&v), ConePoint::Apex);
        v.radial = -0.5;
        assert_eq!(exp_map(&v), ray(0.5, &x));
    }

    #[test]
    fn frechet_mean_examples() {
        let x = at_angle(0.0);
        let p = ray(1.3, &unit(&[vec![2.0, 0.3], vec![0.3, 0.7]]));
        let m = frechet_mean(std::slice::from_ref(&p), &[1.0]).unwrap();
        assert_eq!(m.point, p);
        let m = frechet_mean(&[p.clone(), p.clone()], &[0.3, 0.7]).unwrap();
        assert_eq!(m.point, p);

        let q = ray(2.0, &x);
        let m = frechet_mean(&[p.clone(), q.clone()], &[0.5, 0.5]).unwrap();
        let mid = midpoint(&p, &q);
        assert!(dist_cone(&m.point, &mid) < 1e-8, "{:?} vs {:?}", m.point, mid);
    }

    #[test]
    fn frechet_mean_of_opposite_rays() {
        let x = at_angle(0.0);
        let y = at_angle(PI + 0.2);
        let (p, q) = (ray(1.0, &x), ray(1.0, &y));
        let m = frechet_mean(&[p.clone(), q.clone()], &[0.5, 0.5]).unwrap();
        assert_eq!(m.point, ConePoint::Apex);
        let (p, q) = (ray(1.0, &x), ray(3.0, &y));
        let m = frechet_mean(&[p, q], &[0.5, 0.5]).unwrap();
        assert!(dist_cone(&m.point, &ray(1.0, &y)) < 1e-9, "{:?}", m.point);
    }

    #[test]
    fn frechet_mean_rejects_bad_weights() {
        let p = ray(1.0, &at_angle(0.0));
        assert!(frechet_mean(&[], &[]).is_err());
        assert!(frechet_mean(std::slice::from_ref(&p), &[0.5]).is_err());
        assert!(frechet_mean(&[p.clone(), p.clone()], &[1.0]).is_err());
        assert!(frechet_mean(&[p.clone(), p], &[1.5, -0.5]).is_err());
    }

    #[test]
    fn approximate_by_positive_examples() {
        let p = embed(&SpdMatrix::diag(&[3.0, 0.5]).unwrap());
        let a = approximate_by_positive(&p, 1e-3, 2).unwrap();
        assert!(dist_cone(&embed(&a), &p) < 1e-12);
        let eps = 1e-3;
        let a = approximate_by_positive(&ConePoint::Apex, eps, 2).unwrap();
        let c = a.get(0, 0);
        assert!(c < (eps * SQRT_2 / 4.0).powi(2));
        let r = dist_cone(&embed(&a), &ConePoint::Apex);
        assert!(r < eps && rel(r, embed(&a).radius()) < 1e-15);
        assert!(approximate_by_positive(&ConePoint::Apex, 0.0, 2).is_err());
    }
}
