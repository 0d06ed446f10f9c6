//! Randomized property suites over the completed cone and its field spaces.
//!
//! Every iteration draws from its own ChaCha stream keyed by `(seed, index)`,
//! so reports are reproducible and independent of how iterations are
//! scheduled across threads. The central check is the CN (Bruhat-Tits)
//! midpoint inequality
//!
//! ```text
//! d(x, m)^2 <= d(x, y)^2 / 2 + d(x, z)^2 / 2 - d(y, z)^2 / 4,   m = midpoint(y, z)
//! ```
//!
//! which characterizes CAT(0) among complete geodesic spaces.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cone::{
    approximate_by_positive, dist_branch, dist_cone, embed, geodesic_cone, midpoint, ConePoint, DistBranch,
};
use crate::field::{field_dist, field_geodesic, Atom, MetricField, SampleSpace};
use crate::io::{MatrixLiteral, PointDoc};
use crate::linalg::{Matrix, SymMatrix};
use crate::oracle::{oracle_dist, MetricKind, DEFAULT_BUDGET};
use crate::spd::{dist_affine, SpdMatrix};

/// Absolute tolerance on CN margins (squared distances, radii up to ~10).
pub const CN_TOL: f64 = 1e-9;
/// Slack allowed in the metric axioms.
pub const AXIOM_TOL: f64 = 1e-12;
/// Absolute tolerance of the geodesic contracts.
pub const GEODESIC_TOL: f64 = 1e-9;
/// Relative tolerance of the cone distance against the ebin oracle.
pub const ORACLE_EBIN_TOL: f64 = 1e-2;
/// Relative tolerance of the affine oracle against the closed form.
pub const ORACLE_AFFINE_TOL: f64 = 1e-3;
/// Approximation radius of the density probe.
pub const COMPLETENESS_EPS: f64 = 1e-3;

/// Heavy-tail draws are clipped to this many anisotropy units.
pub const HEAVY_TAIL_CLIP: f64 = 8.0;

/// Maximum number of failures kept verbatim in a report.
const MAX_REPORTED_FAILURES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n: usize,
    /// Range of `log det` of sampled matrices.
    pub log_det_range: (f64, f64),
    /// Half-width of the (centered) log-eigenvalue spread.
    pub anisotropy: f64,
    pub apex_probability: f64,
    pub seed: u64,
    /// Draw log-eigenvalues from a clipped Cauchy law instead of a uniform one.
    pub heavy_tail: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n: 2, log_det_range: (-2.0, 2.0), anisotropy: 1.0, apex_probability: 0.1, seed: 0, heavy_tail: true }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("n must be at least 1".into());
        }
        let (lo, hi) = self.log_det_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(format!("invalid log-det range [{lo}, {hi}]"));
        }
        if !(self.anisotropy >= 0.0) || !self.anisotropy.is_finite() {
            return Err(format!("anisotropy must be non-negative, got {}", self.anisotropy));
        }
        if !(0.0..=1.0).contains(&self.apex_probability) {
            return Err(format!("apex probability must lie in [0, 1], got {}", self.apex_probability));
        }
        Ok(())
    }
}

/// Random stream for iteration `index` of a run seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect()).collect();
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = (0..n).map(|i| cols[j][i] * cols[k][i]).sum();
            for i in 0..n {
                cols[j][i] -= dot * cols[k][i];
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut cols[j] {
            *v /= norm;
        }
    }
    let mut q = Matrix::zeros(n);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            q.set(i, j, *v);
        }
    }
    q
}

/// Random SPD matrix `Q diag(exp(u_i + l / n)) Q^T` with centered
/// log-eigenvalues `u_i` and `log det = l` uniform in the configured range.
pub fn sample_spd(cfg: &SamplerConfig, rng: &mut impl Rng) -> SpdMatrix {
    let n = cfg.n;
    let q = random_orthogonal(n, rng);
    let mut u: Vec<f64> = if cfg.heavy_tail {
        let cauchy = Cauchy::new(0.0, 1.0).expect("valid Cauchy scale");
        (0..n)
            .map(|_| {
                cfg.anisotropy * Distribution::<f64>::sample(&cauchy, rng).clamp(-HEAVY_TAIL_CLIP, HEAVY_TAIL_CLIP)
            })
            .collect()
    } else if cfg.anisotropy > 0.0 {
        (0..n).map(|_| rng.random_range(-cfg.anisotropy..=cfg.anisotropy)).collect()
    } else {
        vec![0.0; n]
    };
    let mean = u.iter().sum::<f64>() / n as f64;
    let (lo, hi) = cfg.log_det_range;
    let log_det = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    for v in &mut u {
        *v += log_det / n as f64 - mean;
    }
    let d = SymMatrix::diag(&u.iter().map(|v| v.exp()).collect::<Vec<_>>());
    SpdMatrix::new(q.congruence(&d)).expect("sampled matrix is SPD")
}

/// The apex with the configured probability, otherwise an embedded SPD sample.
pub fn sample_cone_point(cfg: &SamplerConfig, rng: &mut impl Rng) -> ConePoint {
    if cfg.apex_probability > 0.0 && rng.random_bool(cfg.apex_probability) {
        ConePoint::Apex
    } else {
        embed(&sample_spd(cfg, rng))
    }
}

pub fn sample_field(cfg: &SamplerConfig, space: &Arc<SampleSpace>, rng: &mut impl Rng) -> MetricField {
    let values = (0..space.len()).map(|_| sample_cone_point(cfg, rng)).collect();
    MetricField::new(space.clone(), values).expect("sampled values match the space")
}

/// Sample space with `k` atoms and random positive weights.
pub fn sample_space(n: usize, k: usize, rng: &mut impl Rng) -> Arc<SampleSpace> {
    let atoms = (0..k).map(|i| Atom { id: format!("a{i:04}"), weight: rng.random_range(0.1..1.0) }).collect();
    Arc::new(SampleSpace::normalized(n, atoms).expect("positive weights").0)
}

/// Signed CN margin `d(x,y)^2/2 + d(x,z)^2/2 - d(y,z)^2/4 - d(x,m)^2` with
/// `m` the midpoint of `y` and `z`. Non-negative on every triple iff CAT(0).
pub fn cn_check(x: &ConePoint, y: &ConePoint, z: &ConePoint) -> f64 {
    let m = midpoint(y, z);
    let dxy = dist_cone(x, y);
    let dxz = dist_cone(x, z);
    let dyz = dist_cone(y, z);
    let dxm = dist_cone(x, &m);
    0.5 * dxy * dxy + 0.5 * dxz * dxz - 0.25 * dyz * dyz - dxm * dxm
}

/// Field version of [`cn_check`], with the pointwise midpoint.
pub fn cn_check_field(x: &MetricField, y: &MetricField, z: &MetricField) -> f64 {
    let m = field_geodesic(y, z, 0.5).expect("fields share a space");
    let d = |a: &MetricField, b: &MetricField| field_dist(a, b).expect("fields share a space");
    let (dxy, dxz, dyz, dxm) = (d(x, y), d(x, z), d(y, z), d(x, &m));
    0.5 * dxy * dxy + 0.5 * dxz * dxz - 0.25 * dyz * dyz - dxm * dxm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    CnCone,
    CnField,
    MetricAxioms,
    GeodesicConsistency,
    OracleEquiv,
    OracleCalibration,
    Completeness,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 7] = [
        Self::CnCone,
        Self::CnField,
        Self::MetricAxioms,
        Self::GeodesicConsistency,
        Self::OracleEquiv,
        Self::OracleCalibration,
        Self::Completeness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CnCone => "cn_cone",
            Self::CnField => "cn_field",
            Self::MetricAxioms => "metric_axioms",
            Self::GeodesicConsistency => "geodesic_consistency",
            Self::OracleEquiv => "oracle_equiv",
            Self::OracleCalibration => "oracle_calibration",
            Self::Completeness => "completeness",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            Self::CnCone | Self::CnField => CN_TOL,
            Self::MetricAxioms => AXIOM_TOL,
            Self::GeodesicConsistency => GEODESIC_TOL,
            Self::OracleEquiv => ORACLE_EBIN_TOL,
            Self::OracleCalibration => ORACLE_AFFINE_TOL,
            Self::Completeness => COMPLETENESS_EPS,
        }
    }
}

/// Knobs of [`run_suite`] beyond the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Overrides the kind's default tolerance.
    pub tolerance: Option<f64>,
    /// Segments of the oracle paths.
    pub oracle_segments: usize,
    /// Atoms of the sample space used by the field suite.
    pub field_atoms: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { tolerance: None, oracle_segments: 128, field_atoms: 16 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub apex: u64,
    pub sector: u64,
    pub through_apex: u64,
}

impl BranchCounts {
    fn record(&mut self, b: DistBranch) {
        match b {
            DistBranch::Apex => self.apex += 1,
            DistBranch::Sector => self.sector += 1,
            DistBranch::ThroughApex => self.through_apex += 1,
        }
    }

    fn merge(&mut self, o: &Self) {
        self.apex += o.apex;
        self.sector += o.sector;
        self.through_apex += o.through_apex;
    }
}

/// A sample that exceeded tolerance, or the worst sample of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: u64,
    pub seed: u64,
    pub violation: f64,
    pub inputs: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: SuiteKind,
    pub n: usize,
    pub seed: u64,
    pub samples: u64,
    pub tolerance: f64,
    /// Largest violation over all samples (0 when every sample is inside the
    /// admissible region).
    pub max_violation: f64,
    /// Mean of the per-sample margins (distance to the violation boundary).
    pub mean_margin: f64,
    pub failure_count: u64,
    pub failures: Vec<Failure>,
    /// Sample attaining `max_violation`, with its inputs.
    pub worst: Option<Failure>,
    pub branches: BranchCounts,
    pub passed: bool,
}

struct Sample {
    /// Positive means bad; compared against the tolerance.
    violation: f64,
    margin: f64,
    inputs: Value,
    branches: BranchCounts,
}

fn point_json(p: &ConePoint) -> Value {
    serde_json::to_value(PointDoc::from(p)).expect("serializable point")
}

fn matrix_json(a: &SpdMatrix) -> Value {
    serde_json::to_value(MatrixLiteral::from(a.as_sym())).expect("serializable matrix")
}

fn branches_of(pairs: &[(&ConePoint, &ConePoint)]) -> BranchCounts {
    let mut b = BranchCounts::default();
    for (p, q) in pairs {
        b.record(dist_branch(p, q));
    }
    b
}

fn run_one(kind: SuiteKind, cfg: &SamplerConfig, opts: &SuiteOptions, space: &Arc<SampleSpace>, index: u64) -> Sample {
    let rng = &mut stream(cfg.seed, index);
    match kind {
        SuiteKind::CnCone => {
            let (x, y, z) = (sample_cone_point(cfg, rng), sample_cone_point(cfg, rng), sample_cone_point(cfg, rng));
            let margin = cn_check(&x, &y, &z);
            Sample {
                violation: -margin,
                margin,
                inputs: json!({"x": point_json(&x), "y": point_json(&y), "z": point_json(&z)}),
                branches: branches_of(&[(&x, &y), (&x, &z), (&y, &z)]),
            }
        }
        SuiteKind::CnField => {
            let (x, y, z) =
                (sample_field(cfg, space, rng), sample_field(cfg, space, rng), sample_field(cfg, space, rng));
            let margin = cn_check_field(&x, &y, &z);
            let mut branches = BranchCounts::default();
            for i in 0..space.len() {
                let (a, b, c) = (&x.values()[i], &y.values()[i], &z.values()[i]);
                branches.merge(&branches_of(&[(a, b), (a, c), (b, c)]));
            }
            Sample {
                violation: -margin,
                margin,
                inputs: json!({"x": x.to_doc(), "y": y.to_doc(), "z": z.to_doc()}),
                branches,
            }
        }
        SuiteKind::MetricAxioms => {
            let pts = [sample_cone_point(cfg, rng), sample_cone_point(cfg, rng), sample_cone_point(cfg, rng)];
            let mut worst: f64 = 0.0;
            for a in &pts {
                worst = worst.max(dist_cone(a, a));
                for b in &pts {
                    let dab = dist_cone(a, b);
                    worst = worst.max((dab - dist_cone(b, a)).abs()).max(-dab);
                    for c in &pts {
                        worst = worst.max(dist_cone(a, c) - dab - dist_cone(b, c));
                    }
                }
            }
            let [x, y, z] = &pts;
            Sample {
                violation: worst,
                margin: -worst,
                inputs: json!({"x": point_json(x), "y": point_json(y), "z": point_json(z)}),
                branches: branches_of(&[(x, y), (x, z), (y, z)]),
            }
        }
        SuiteKind::GeodesicConsistency => {
            let (p, q) = (sample_cone_point(cfg, rng), sample_cone_point(cfg, rng));
            let (s, u): (f64, f64) = (rng.random(), rng.random());
            let d = dist_cone(&p, &q);
            let (gs, gu) = (geodesic_cone(&p, &q, s), geodesic_cone(&p, &q, u));
            let m = midpoint(&p, &q);
            let err = (dist_cone(&gs, &gu) - (s - u).abs() * d)
                .abs()
                .max((dist_cone(&p, &m) - 0.5 * d).abs())
                .max((dist_cone(&m, &q) - 0.5 * d).abs())
                .max((dist_cone(&p, &gs) - s * d).abs());
            Sample {
                violation: err,
                margin: -err,
                inputs: json!({"p": point_json(&p), "q": point_json(&q), "s": s, "u": u}),
                branches: branches_of(&[(&p, &q)]),
            }
        }
        SuiteKind::OracleEquiv | SuiteKind::OracleCalibration => {
            let (a, b) = (sample_spd(cfg, rng), sample_spd(cfg, rng));
            let (metric, exact) = if kind == SuiteKind::OracleEquiv {
                (MetricKind::Ebin, dist_cone(&embed(&a), &embed(&b)))
            } else {
                (MetricKind::Affine, dist_affine(&a, &b).expect("same dimension"))
            };
            let (oracle, converged) = match oracle_dist(&a, &b, metric, opts.oracle_segments, DEFAULT_BUDGET) {
                Ok(o) => (o.length, o.converged),
                Err(_) => (f64::NAN, false),
            };
            let err = if exact > 0.0 { (oracle - exact).abs() / exact } else { oracle.abs() };
            let err = if err.is_nan() { f64::INFINITY } else { err };
            let tol = opts.tolerance.unwrap_or(kind.default_tolerance());
            Sample {
                violation: err,
                margin: tol - err,
                inputs: json!({
                    "a": matrix_json(&a), "b": matrix_json(&b),
                    "closed_form": exact, "oracle": oracle, "oracle_converged": converged,
                }),
                branches: branches_of(&[(&embed(&a), &embed(&b))]),
            }
        }
        SuiteKind::Completeness => {
            let p = sample_cone_point(cfg, rng);
            let eps = opts.tolerance.unwrap_or(COMPLETENESS_EPS);
            let (dist, approx) = match approximate_by_positive(&p, eps, cfg.n) {
                Ok(a) => (dist_cone(&embed(&a), &p), Some(a)),
                Err(_) => (f64::INFINITY, None),
            };
            Sample {
                violation: dist,
                margin: eps - dist,
                inputs: json!({"p": point_json(&p), "approximation": approx.as_ref().map(matrix_json), "distance": dist}),
                branches: BranchCounts::default(),
            }
        }
    }
}

fn is_failure(kind: SuiteKind, violation: f64, tol: f64) -> bool {
    match kind {
        // the approximation must be strictly inside the radius
        SuiteKind::Completeness => !(violation < tol),
        _ => !(violation <= tol),
    }
}

/// Runs `iterations` samples of a suite. Deterministic for a given config.
pub fn run_suite(kind: SuiteKind, cfg: &SamplerConfig, iterations: u64, opts: &SuiteOptions) -> SuiteReport {
    let tol = opts.tolerance.unwrap_or(kind.default_tolerance());
    // the field suite draws its sample space from a stream no iteration uses
    let space = sample_space(cfg.n, opts.field_atoms.max(1), &mut stream(cfg.seed, u64::MAX));
    let samples: Vec<Sample> = (0..iterations).into_par_iter().map(|i| run_one(kind, cfg, opts, &space, i)).collect();

    let mut failures = Vec::new();
    let mut failure_count = 0;
    let mut worst: Option<Failure> = None;
    let mut branches = BranchCounts::default();
    let mut margin_sum = 0.0;
    for (i, s) in samples.into_iter().enumerate() {
        let index = i as u64;
        margin_sum += s.margin;
        branches.merge(&s.branches);
        let record = || Failure { index, seed: cfg.seed, violation: s.violation, inputs: s.inputs.clone() };
        if worst.as_ref().is_none_or(|w| s.violation > w.violation) {
            worst = Some(record());
        }
        if is_failure(kind, s.violation, tol) {
            failure_count += 1;
            if failures.len() < MAX_REPORTED_FAILURES {
                failures.push(record());
            }
        }
    }
    let max_violation = worst.as_ref().map_or(0.0, |w| w.violation.max(0.0));
    SuiteReport {
        suite: kind,
        n: cfg.n,
        seed: cfg.seed,
        samples: iterations,
        tolerance: tol,
        max_violation,
        mean_margin: if iterations > 0 { margin_sum / iterations as f64 } else { 0.0 },
        failure_count,
        failures,
        worst,
        branches,
        passed: failure_count == 0,
    }
}

/// Replays a single iteration of a suite, for reproducing a reported failure.
pub fn replay(kind: SuiteKind, cfg: &SamplerConfig, index: u64, opts: &SuiteOptions) -> (f64, Value) {
    let space = sample_space(cfg.n, opts.field_atoms.max(1), &mut stream(cfg.seed, u64::MAX));
    let s = run_one(kind, cfg, opts, &space, index);
    (s.violation, s.inputs)
}
