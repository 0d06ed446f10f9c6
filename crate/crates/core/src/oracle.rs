//! Variational distance oracle.
//!
//! Distances are computed by discretizing a curve into `K` segments and
//! shortening it directly under one of the two Riemannian inner products on
//! `P(n)`. A segment `u -> v` is charged `|v - u|` measured at the entrywise
//! midpoint `(u + v) / 2`. Nothing here uses the cone model or the
//! determinant splitting: the oracle only sees the inner products.
//!
//! Shortening is a red-black Gauss-Seidel sweep. Each interior node takes a
//! damped Newton step on the energy of its two adjacent segments, and the step
//! is only accepted if neither the local energy nor the local length grows, so
//! the path length never increases. [`oracle_dist`] runs this coarse-to-fine
//! from two initial curves (the entrywise segment and the affine geodesic) and
//! keeps the shorter result.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Matrix, SymMatrix};
use crate::spd::{geo_affine, SpdMatrix};

/// Eigenvalue floor, relative to the largest eigenvalue, used to project
/// candidate nodes back into `P(n)`.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Relative change of the path length below which a level is considered
/// stationary.
pub const LEVEL_TOL: f64 = 1e-11;

/// Sweeps run on a level before the stationarity test is applied.
const MIN_SWEEPS_PER_LEVEL: usize = 4;

/// Relative energy decrease below which a node update is not attempted.
const RESOLVABLE_DECREASE: f64 = 1e-14;

/// Backtracking halvings of a node update.
const MAX_HALVINGS: usize = 20;

/// Coarsest discretization used by the multilevel driver.
const COARSEST_SEGMENTS: usize = 4;

/// Default sweep budget of [`oracle_dist`].
pub const DEFAULT_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// `tr(h^-1 a h^-1 b)`.
    Affine,
    /// `tr(h^-1 a h^-1 b) * sqrt(det h)`.
    Ebin,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("a path needs at least two nodes")]
    TooShort,
    #[error("path nodes have mismatched dimensions")]
    DimensionMismatch,
    #[error("segment midpoint {0} is not positive definite")]
    MidpointNotSpd(usize),
    #[error("step collapse: no node could move although the largest gradient is {gradient:e}; refine K")]
    StepCollapse { gradient: f64 },
}

/// A polyline in `P(n)` with `K + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    nodes: Vec<SpdMatrix>,
    kind: MetricKind,
}

impl DiscretePath {
    pub fn new(nodes: Vec<SpdMatrix>, kind: MetricKind) -> Result<Self, OracleError> {
        if nodes.len() < 2 {
            return Err(OracleError::TooShort);
        }
        let n = nodes[0].n();
        if nodes.iter().any(|a| a.n() != n) {
            return Err(OracleError::DimensionMismatch);
        }
        Ok(Self { nodes, kind })
    }

    /// `K + 1` equally spaced nodes on the entrywise segment from `a` to `b`.
    pub fn straight(a: &SpdMatrix, b: &SpdMatrix, segments: usize, kind: MetricKind) -> Result<Self, OracleError> {
        let nodes = (0..=segments)
            .map(|k| {
                let s = k as f64 / segments as f64;
                SpdMatrix::new(a.lerp(b, s)).expect("convex combination of SPD matrices")
            })
            .collect();
        Self::new(nodes, kind)
    }

    /// `K + 1` samples of the affine-invariant geodesic from `a` to `b`.
    pub fn affine_geodesic(
        a: &SpdMatrix,
        b: &SpdMatrix,
        segments: usize,
        kind: MetricKind,
    ) -> Result<Self, OracleError> {
        let nodes = (0..=segments)
            .map(|k| geo_affine(a, b, k as f64 / segments as f64))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| OracleError::DimensionMismatch)?;
        Self::new(nodes, kind)
    }

    pub fn nodes(&self) -> &[SpdMatrix] {
        &self.nodes
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Joins two paths sharing an endpoint.
    pub fn concat(&self, other: &Self) -> Result<Self, OracleError> {
        let mut nodes = self.nodes.clone();
        nodes.extend(other.nodes.iter().skip(1).cloned());
        Self::new(nodes, self.kind)
    }

    /// Doubles the resolution by inserting entrywise midpoints.
    pub fn refine(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0].clone());
            nodes.push(SpdMatrix::new(w[0].lerp(&w[1], 0.5)).expect("midpoint of SPD matrices"));
        }
        nodes.push(self.nodes.last().expect("non-empty").clone());
        Self { nodes, kind: self.kind }
    }

    pub fn length(&self) -> Result<f64, OracleError> {
        path_length(self)
    }
}

/// Inverse and `sqrt(det)` of a positive-definite matrix, or `None`.
fn chol_inverse(m: &SymMatrix) -> Option<(Matrix, f64)> {
    let l = m.cholesky().ok()?;
    let n = m.n();
    let sqrt_det: f64 = (0..n).map(|i| l.get(i, i)).product();
    let linv = crate::linalg::lower_solve(&l, &Matrix::identity(n));
    let inv = linv.transpose().mul(&linv);
    Some((inv, sqrt_det))
}

/// Squared length of `d` at base point `m`, with its gradients in `m` and `d`
/// when requested.
struct Segment {
    value: f64,
    grad_m: Option<Matrix>,
    grad_d: Option<Matrix>,
}

fn segment(kind: MetricKind, m: &SymMatrix, d: &SymMatrix, with_grad: bool) -> Option<Segment> {
    let (minv, sqrt_det) = chol_inverse(m)?;
    let c = match kind {
        MetricKind::Affine => 1.0,
        MetricKind::Ebin => sqrt_det,
    };
    let p = minv.mul(d.as_matrix());
    let q = p.trace_of_product(&p);
    if !with_grad {
        return Some(Segment { value: c * q, grad_m: None, grad_d: None });
    }
    // d/dd:  2 c m^-1 d m^-1
    // d/dm: -2 c m^-1 d m^-1 d m^-1 + (q c / 2) m^-1   (second term for ebin only)
    let pm = p.mul(&minv);
    let grad_d = pm.scale(2.0 * c);
    let mut grad_m = p.mul(&pm).scale(-2.0 * c);
    if kind == MetricKind::Ebin {
        let extra = minv.scale(0.5 * q * c);
        grad_m =
            Matrix::from_row_major(m.n(), grad_m.as_slice().iter().zip(extra.as_slice()).map(|(a, b)| a + b).collect())
                .expect("finite gradient");
    }
    Some(Segment { value: c * q, grad_m: Some(grad_m), grad_d: Some(grad_d) })
}

fn midpoint_of(u: &SymMatrix, v: &SymMatrix) -> SymMatrix {
    u.lerp(v, 0.5)
}

/// Sum over segments of `sqrt(<d_k, d_k>_{m_k})`.
pub fn path_length(p: &DiscretePath) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for (k, w) in p.nodes.windows(2).enumerate() {
        let m = midpoint_of(&w[0], &w[1]);
        let d = w[1].sub(&w[0]);
        let seg = segment(p.kind, &m, &d, false).ok_or(OracleError::MidpointNotSpd(k))?;
        total += seg.value.max(0.0).sqrt();
    }
    Ok(total)
}

/// Energy and length of the two segments around an interior node.
fn local_terms(kind: MetricKind, a: &SymMatrix, x: &SymMatrix, b: &SymMatrix) -> Option<(f64, f64)> {
    let left = segment(kind, &midpoint_of(a, x), &x.sub(a), false)?.value;
    let right = segment(kind, &midpoint_of(x, b), &b.sub(x), false)?.value;
    Some((left + right, left.max(0.0).sqrt() + right.max(0.0).sqrt()))
}

/// Gradient of the local energy in upper-triangle coordinates.
fn local_gradient(kind: MetricKind, a: &SymMatrix, x: &SymMatrix, b: &SymMatrix) -> Option<Vec<f64>> {
    let left = segment(kind, &midpoint_of(a, x), &x.sub(a), true)?;
    let right = segment(kind, &midpoint_of(x, b), &b.sub(x), true)?;
    let n = x.n();
    let (lm, ld) = (left.grad_m?, left.grad_d?);
    let (rm, rd) = (right.grad_m?, right.grad_d?);
    let g = |i: usize, j: usize| 0.5 * lm.get(i, j) + ld.get(i, j) + 0.5 * rm.get(i, j) - rd.get(i, j);
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(if i == j { g(i, i) } else { g(i, j) + g(j, i) });
        }
    }
    Some(out)
}

/// Central-difference Hessian of the local energy, symmetrized.
fn local_hessian(kind: MetricKind, a: &SymMatrix, x: &SymMatrix, b: &SymMatrix) -> Option<Vec<Vec<f64>>> {
    let n = x.n();
    let coords = x.upper_coords();
    let dim = coords.len();
    let h = 1e-5 * x.max_abs().max(f64::MIN_POSITIVE);
    let mut hess = vec![vec![0.0; dim]; dim];
    for k in 0..dim {
        let mut plus = coords.clone();
        plus[k] += h;
        let mut minus = coords.clone();
        minus[k] -= h;
        let gp = local_gradient(kind, a, &SymMatrix::from_upper_coords(n, &plus), b)?;
        let gm = local_gradient(kind, a, &SymMatrix::from_upper_coords(n, &minus), b)?;
        for (row, (p, m)) in hess.iter_mut().zip(gp.iter().zip(&gm)) {
            row[k] = (p - m) / (2.0 * h);
        }
    }
    for i in 0..dim {
        for j in i + 1..dim {
            let v = 0.5 * (hess[i][j] + hess[j][i]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Some(hess)
}

/// Solves `(H + mu I) p = -g`, raising `mu` until the shifted matrix is positive definite.
fn damped_newton(hess: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let dim = g.len();
    let diag_scale = hess.iter().enumerate().map(|(i, r)| r[i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut mu = 0.0;
    for _ in 0..60 {
        let shifted: Vec<f64> = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| hess[i][j] + if i == j { mu } else { 0.0 })
            .collect();
        let m = Matrix::from_row_major(dim, shifted).ok()?;
        if let Ok(s) = SymMatrix::new(m) {
            if let Ok(l) = s.cholesky() {
                // forward and backward substitution
                let mut y = vec![0.0; dim];
                for i in 0..dim {
                    let mut v = -g[i];
                    for k in 0..i {
                        v -= l.get(i, k) * y[k];
                    }
                    y[i] = v / l.get(i, i);
                }
                let mut p = vec![0.0; dim];
                for i in (0..dim).rev() {
                    let mut v = y[i];
                    for k in i + 1..dim {
                        v -= l.get(k, i) * p[k];
                    }
                    p[i] = v / l.get(i, i);
                }
                return Some(p);
            }
        }
        mu = if mu == 0.0 { 1e-8 * diag_scale } else { mu * 10.0 };
    }
    None
}

/// Floors eigenvalues at `EIGEN_FLOOR` times the largest one.
fn project_spd(x: SymMatrix) -> Option<SymMatrix> {
    let e = x.eig().ok()?;
    let max = *e.eigenvalues.last()?;
    if !(max > 0.0) {
        return None;
    }
    let floor = EIGEN_FLOOR * max;
    if e.eigenvalues[0] >= floor {
        return Some(x);
    }
    Some(e.reconstruct_with(|l| l.max(floor)))
}

/// Outcome of a single node update.
struct NodeUpdate {
    moved: bool,
    grad_norm: f64,
}

fn update_node(kind: MetricKind, a: &SymMatrix, x: &mut SymMatrix, b: &SymMatrix, step: f64) -> NodeUpdate {
    let Some(g) = local_gradient(kind, a, x, b) else {
        return NodeUpdate { moved: false, grad_norm: f64::INFINITY };
    };
    let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if grad_norm == 0.0 {
        return NodeUpdate { moved: false, grad_norm };
    }
    let Some((e0, l0)) = local_terms(kind, a, x, b) else {
        return NodeUpdate { moved: false, grad_norm };
    };
    let dir = local_hessian(kind, a, x, b)
        .and_then(|h| damped_newton(&h, &g))
        .unwrap_or_else(|| g.iter().map(|v| -v).collect());
    // no decrease resolvable above round-off of the local energy
    let predicted: f64 = -g.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
    if !(predicted > RESOLVABLE_DECREASE * e0) {
        return NodeUpdate { moved: false, grad_norm };
    }
    let n = x.n();
    let coords = x.upper_coords();
    let mut t = step;
    for _ in 0..MAX_HALVINGS {
        let trial: Vec<f64> = coords.iter().zip(&dir).map(|(c, d)| c + t * d).collect();
        if let Some(cand) = project_spd(SymMatrix::from_upper_coords(n, &trial)) {
            if let Some((e1, l1)) = local_terms(kind, a, &cand, b) {
                if e1 < e0 && l1 <= l0 {
                    *x = cand;
                    return NodeUpdate { moved: true, grad_norm };
                }
            }
        }
        t *= 0.5;
    }
    NodeUpdate { moved: false, grad_norm }
}

/// One red-black sweep over the interior nodes. Returns whether any node
/// moved and the largest relative local gradient seen.
fn sweep(kind: MetricKind, nodes: &mut [SymMatrix], step: f64) -> (bool, f64) {
    let k = nodes.len() - 1;
    let mut moved = false;
    let mut worst: f64 = 0.0;
    for parity in [1, 0] {
        for i in (1..k).filter(|i| i % 2 == parity) {
            let (head, tail) = nodes.split_at_mut(i);
            let (mid, rest) = tail.split_at_mut(1);
            let upd = update_node(kind, &head[i - 1], &mut mid[0], &rest[0], step);
            moved |= upd.moved;
            worst = worst.max(upd.grad_norm);
        }
    }
    (moved, worst)
}

fn to_path(nodes: Vec<SymMatrix>, kind: MetricKind) -> DiscretePath {
    let nodes = nodes.into_iter().map(|s| SpdMatrix::new(s).expect("projected node is SPD")).collect();
    DiscretePath { nodes, kind }
}

/// Runs `iterations` shortening sweeps with initial Newton step fraction `step`.
///
/// Endpoints stay fixed and the length never increases. Fails with
/// [`OracleError::StepCollapse`] if a sweep cannot move any node while the
/// local gradients are still far from zero.
pub fn shorten(p: &DiscretePath, iterations: usize, step: f64) -> Result<DiscretePath, OracleError> {
    let mut nodes: Vec<SymMatrix> = p.nodes.iter().map(|a| a.as_sym().clone()).collect();
    if nodes.len() < 3 {
        return Ok(p.clone());
    }
    let scale = p.nodes.iter().map(|a| a.frobenius_norm()).fold(0.0, f64::max);
    let energy_scale = path_length(p)?.powi(2) / scale.max(f64::MIN_POSITIVE);
    for _ in 0..iterations {
        let (moved, worst) = sweep(p.kind, &mut nodes, step);
        if !moved {
            if worst > 1e-3 * energy_scale {
                return Err(OracleError::StepCollapse { gradient: worst });
            }
            break;
        }
    }
    Ok(to_path(nodes, p.kind))
}

/// Shortens at a fixed resolution until the length stabilizes or the sweep
/// budget runs out. Returns the nodes, whether the level converged and the
/// sweeps used.
fn settle(kind: MetricKind, mut nodes: Vec<SymMatrix>, budget: usize) -> (Vec<SymMatrix>, bool, usize) {
    if nodes.len() < 3 {
        return (nodes, true, 0);
    }
    let length_of = |nodes: &[SymMatrix]| -> f64 {
        nodes
            .windows(2)
            .map(|w| {
                segment(kind, &midpoint_of(&w[0], &w[1]), &w[1].sub(&w[0]), false)
                    .map_or(f64::INFINITY, |s| s.value.max(0.0).sqrt())
            })
            .sum()
    };
    let mut prev = length_of(&nodes);
    let mut used = 0;
    while used < budget {
        let (moved, _) = sweep(kind, &mut nodes, 1.0);
        used += 1;
        let len = length_of(&nodes);
        let change = prev - len;
        prev = len;
        if !moved || (used >= MIN_SWEEPS_PER_LEVEL && change <= LEVEL_TOL * len) {
            return (nodes, true, used);
        }
    }
    (nodes, false, used)
}

fn refine_nodes(nodes: &[SymMatrix]) -> Vec<SymMatrix> {
    let mut out = Vec::with_capacity(2 * nodes.len() - 1);
    for w in nodes.windows(2) {
        out.push(w[0].clone());
        out.push(midpoint_of(&w[0], &w[1]));
    }
    out.push(nodes.last().expect("non-empty").clone());
    out
}

/// Result of [`oracle_dist`].
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub length: f64,
    pub path: DiscretePath,
    /// `false` if the sweep budget ran out before the lengths stabilized; the
    /// path is then the best found so far.
    pub converged: bool,
    pub sweeps: usize,
}

/// Coarse-to-fine resolutions ending at `segments`.
fn levels(segments: usize) -> Vec<usize> {
    let mut out = vec![segments];
    let mut k = segments;
    while k % 2 == 0 && k / 2 >= COARSEST_SEGMENTS {
        k /= 2;
        out.push(k);
    }
    out.reverse();
    out
}

fn multilevel(
    init: impl Fn(usize) -> Result<DiscretePath, OracleError>,
    segments: usize,
    kind: MetricKind,
    budget: usize,
) -> Result<OracleOutcome, OracleError> {
    let lv = levels(segments);
    let mut nodes: Vec<SymMatrix> = init(lv[0])?.nodes.iter().map(|a| a.as_sym().clone()).collect();
    let mut converged = true;
    let mut used = 0;
    for (i, _) in lv.iter().enumerate() {
        if i > 0 {
            nodes = refine_nodes(&nodes);
        }
        let (settled, ok, sweeps) = settle(kind, nodes, budget.saturating_sub(used));
        nodes = settled;
        used += sweeps;
        converged &= ok;
    }
    let path = to_path(nodes, kind);
    let length = path_length(&path)?;
    Ok(OracleOutcome { length, path, converged, sweeps: used })
}

/// Distance estimate between `a` and `b` from shortened discrete paths with
/// `segments` segments; `budget` caps the total number of sweeps per initial
/// curve.
pub fn oracle_dist(
    a: &SpdMatrix,
    b: &SpdMatrix,
    kind: MetricKind,
    segments: usize,
    budget: usize,
) -> Result<OracleOutcome, OracleError> {
    if a.n() != b.n() {
        return Err(OracleError::DimensionMismatch);
    }
    let segments = segments.max(1);
    let straight = multilevel(|k| DiscretePath::straight(a, b, k, kind), segments, kind, budget)?;
    let geodesic = multilevel(|k| DiscretePath::affine_geodesic(a, b, k, kind), segments, kind, budget)?;
    Ok(if geodesic.length < straight.length { geodesic } else { straight })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::dist_affine;
    use std::f64::consts::{E, SQRT_2};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    fn sample_a() -> SpdMatrix {
        SpdMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 0.7]]).unwrap()
    }

    fn sample_b() -> SpdMatrix {
        SpdMatrix::from_rows(&[vec![0.6, -0.4], vec![-0.4, 3.0]]).unwrap()
    }

    #[test]
    fn constant_path_has_zero_length() {
        let a = sample_a();
        let p = DiscretePath::new(vec![a.clone(), a.clone(), a], MetricKind::Ebin).unwrap();
        assert_eq!(path_length(&p).unwrap(), 0.0);
    }

    #[test]
    fn straight_scalar_segment_matches_affine_distance() {
        let i = SpdMatrix::identity(2);
        let e = SpdMatrix::scaled_identity(2, E).unwrap();
        let p = DiscretePath::straight(&i, &e, 256, MetricKind::Affine).unwrap();
        assert!(rel(path_length(&p).unwrap(), SQRT_2) < 1e-3);
    }

    #[test]
    fn refinement_changes_length_by_less_than_length_over_k() {
        let p = DiscretePath::affine_geodesic(&sample_a(), &sample_b(), 16, MetricKind::Ebin).unwrap();
        let l1 = path_length(&p).unwrap();
        let l2 = path_length(&p.refine()).unwrap();
        assert!((l1 - l2).abs() < l1 / 16.0);
    }

    #[test]
    fn concat_is_additive() {
        let (a, b) = (sample_a(), sample_b());
        let m = geo_affine(&a, &b, 0.5).unwrap();
        let p = DiscretePath::straight(&a, &m, 8, MetricKind::Ebin).unwrap();
        let q = DiscretePath::straight(&m, &b, 8, MetricKind::Ebin).unwrap();
        let both = p.concat(&q).unwrap();
        let sum = path_length(&p).unwrap() + path_length(&q).unwrap();
        assert!(rel(path_length(&both).unwrap(), sum) < 1e-14);
    }

    #[test]
    fn two_node_path_is_unchanged() {
        let p = DiscretePath::straight(&sample_a(), &sample_b(), 1, MetricKind::Ebin).unwrap();
        assert_eq!(shorten(&p, 10, 1.0).unwrap(), p);
    }

    #[test]
    fn geodesic_polyline_is_stationary() {
        let p = DiscretePath::affine_geodesic(&sample_a(), &sample_b(), 32, MetricKind::Affine).unwrap();
        let before = path_length(&p).unwrap();
        let after = path_length(&shorten(&p, 20, 1.0).unwrap()).unwrap();
        assert!(after <= before + 1e-12);
        assert!((before - after) / before < 1e-6);
    }

    #[test]
    fn shortening_is_monotone_and_keeps_endpoints() {
        let p = DiscretePath::straight(&sample_a(), &sample_b(), 16, MetricKind::Ebin).unwrap();
        let mut cur = p.clone();
        let mut len = path_length(&cur).unwrap();
        for _ in 0..10 {
            cur = shorten(&cur, 1, 1.0).unwrap();
            let next = path_length(&cur).unwrap();
            assert!(next <= len + 1e-12);
            len = next;
        }
        assert_eq!(cur.nodes()[0], p.nodes()[0]);
        assert_eq!(cur.nodes()[16], p.nodes()[16]);
    }

    #[test]
    fn perturbed_geodesic_relaxes_back() {
        let (a, b) = (sample_a(), sample_b());
        let p = DiscretePath::affine_geodesic(&a, &b, 16, MetricKind::Affine).unwrap();
        let original = path_length(&p).unwrap();
        let bump = SymMatrix::from_rows(&[vec![0.2, 0.1], vec![0.1, -0.15]]).unwrap();
        let nodes: Vec<SpdMatrix> = p
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let w = (std::f64::consts::PI * k as f64 / 16.0).sin();
                SpdMatrix::new(x.add(&bump.scale(w))).unwrap()
            })
            .collect();
        let bent = DiscretePath::new(nodes, MetricKind::Affine).unwrap();
        assert!(path_length(&bent).unwrap() > original * 1.01);
        let relaxed = shorten(&bent, 500, 1.0).unwrap();
        assert!(rel(path_length(&relaxed).unwrap(), original) < 1e-3);
    }

    #[test]
    fn oracle_examples() {
        let a = sample_a();
        let same = oracle_dist(&a, &a, MetricKind::Ebin, 16, DEFAULT_BUDGET).unwrap();
        assert!(same.length < 1e-12);

        let i = SpdMatrix::identity(2);
        let d = SpdMatrix::diag(&[4.0, 1.0]).unwrap();
        let o = oracle_dist(&i, &d, MetricKind::Affine, 128, DEFAULT_BUDGET).unwrap();
        assert!(rel(o.length, 4f64.ln()) < 1e-3, "{}", o.length);
        assert!(o.converged);
    }

    #[test]
    fn oracle_affine_matches_closed_form() {
        let (a, b) = (sample_a(), sample_b());
        let o = oracle_dist(&a, &b, MetricKind::Affine, 128, DEFAULT_BUDGET).unwrap();
        let d = dist_affine(&a, &b).unwrap();
        assert!(rel(o.length, d) < 1e-3, "{} vs {d}", o.length);
    }

    #[test]
    fn oracle_is_symmetric() {
        let (a, b) = (sample_a(), sample_b());
        let ab = oracle_dist(&a, &b, MetricKind::Ebin, 32, DEFAULT_BUDGET).unwrap().length;
        let ba = oracle_dist(&b, &a, MetricKind::Ebin, 32, DEFAULT_BUDGET).unwrap().length;
        assert!((ab - ba).abs() < 1e-6, "{ab} vs {ba}");
    }

    #[test]
    fn level_schedule() {
        assert_eq!(levels(128), vec![4, 8, 16, 32, 64, 128]);
        assert_eq!(levels(6), vec![6]);
        assert_eq!(levels(1), vec![1]);
    }
}

#[cfg(test)]
mod cone_cross_check {
    use super::*;
    use crate::cone::{dist_cone, embed};

    #[test]
    fn scalar_ray_pair_matches_cone_distance() {
        let i = SpdMatrix::identity(2);
        let b = SpdMatrix::scaled_identity(2, 16.0).unwrap();
        let o = oracle_dist(&i, &b, MetricKind::Ebin, 128, DEFAULT_BUDGET).unwrap();
        let d = dist_cone(&embed(&i), &embed(&b));
        assert!((o.length - d).abs() / d < 1e-2, "{} vs {d}", o.length);
    }

    #[test]
    fn generic_pair_matches_cone_distance() {
        let a = SpdMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 0.7]]).unwrap();
        let b = SpdMatrix::from_rows(&[vec![0.6, -0.4], vec![-0.4, 3.0]]).unwrap();
        let o = oracle_dist(&a, &b, MetricKind::Ebin, 128, DEFAULT_BUDGET).unwrap();
        let d = dist_cone(&embed(&a), &embed(&b));
        assert!((o.length - d).abs() / d < 1e-2, "{} vs {d}", o.length);
    }
}
