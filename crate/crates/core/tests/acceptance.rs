//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed; the
//! process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ebin_core::cone::{
    angle, angle_scale, approximate_by_positive, dist_cone, embed, frechet_mean, geodesic_cone, mean_objective,
    midpoint, ConePoint,
};
use ebin_core::field::{field_dist, reindex, SampleSpace};
use ebin_core::harness::{
    cn_check, run_suite, sample_cone_point, sample_field, sample_spd, stream, SamplerConfig, SuiteKind, SuiteOptions,
    SuiteReport,
};
use ebin_core::linalg::Matrix;
use ebin_core::spd::{dist_affine, split, SpdMatrix, UnitDetSpd};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn oracle_corpus(n: usize) -> SamplerConfig {
    SamplerConfig {
        n,
        log_det_range: (-2.0, 2.0),
        anisotropy: 1.0,
        apex_probability: 0.0,
        seed: SEED + n as u64,
        heavy_tail: false,
    }
}

fn summarize(r: &SuiteReport) -> String {
    format!(
        "n={} samples={} max_violation={:.3e} tol={:.0e} failures={}",
        r.n, r.samples, r.max_violation, r.tolerance, r.failure_count
    )
}

fn oracle_suite(kind: SuiteKind) -> Outcome {
    let start = Instant::now();
    let reports: Vec<SuiteReport> =
        [2, 3].iter().map(|&n| run_suite(kind, &oracle_corpus(n), 100, &SuiteOptions::default())).collect();
    let elapsed = start.elapsed();
    let passed = reports.iter().all(|r| r.passed) && elapsed <= Duration::from_secs(600);
    let detail = reports.iter().map(summarize).collect::<Vec<_>>().join("; ");
    outcome(passed, format!("{detail}; runtime {:.1}s", elapsed.as_secs_f64()))
}

fn criterion_1() -> Outcome {
    oracle_suite(SuiteKind::OracleEquiv)
}

fn criterion_2() -> Outcome {
    oracle_suite(SuiteKind::OracleCalibration)
}

fn criterion_3() -> Outcome {
    let opts = SuiteOptions::default();
    let mut reports = Vec::new();
    for n in [2, 3] {
        let cfg = SamplerConfig { n, seed: SEED, apex_probability: 0.1, heavy_tail: true, ..Default::default() };
        reports.push(run_suite(SuiteKind::CnCone, &cfg, 10_000, &opts));
    }
    let cfg = SamplerConfig { n: 2, seed: SEED, apex_probability: 0.1, heavy_tail: true, ..Default::default() };
    reports.push(run_suite(SuiteKind::CnField, &cfg, 1_000, &SuiteOptions { field_atoms: 16, ..opts }));
    let min_margin =
        reports.iter().map(|r| r.worst.as_ref().map_or(0.0, |w| -w.violation)).fold(f64::INFINITY, f64::min);
    let passed = reports.iter().all(|r| r.passed);
    let detail = reports.iter().map(|r| format!("{}[{}]", r.suite.name(), summarize(r))).collect::<Vec<_>>();
    outcome(passed, format!("min margin {min_margin:.3e}; {}", detail.join("; ")))
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..1_000u64 {
        let rng = &mut stream(SEED, i);
        let cfg = SamplerConfig { n: 2 + (i % 3) as usize, ..Default::default() };
        let (a, b) = (sample_spd(&cfg, rng), sample_spd(&cfg, rng));
        let (sa, sb) = (split(&a), split(&b));
        let d0 = dist_affine(&a, &b).unwrap();
        let d1 = dist_affine(&sa.x1, &sb.x1).unwrap();
        let dt = sa.t - sb.t;
        worst = worst.max((d0 * d0 - (d1 * d1 + dt * dt)).abs() / (d0 * d0));
    }
    outcome(worst <= 1e-9, format!("1000 pairs, max |d0^2 - d1^2 - dt^2| / d0^2 = {worst:.3e} (tol 1e-9)"))
}

fn random_invertible(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    loop {
        let data = (0..n * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = Matrix::from_row_major(n, data).unwrap();
        if g.det().abs() > 0.05 {
            return g;
        }
    }
}

fn criterion_5() -> Outcome {
    let (mut worst_affine, mut worst_cone): (f64, f64) = (0.0, 0.0);
    for i in 0..1_000u64 {
        let rng = &mut stream(SEED + 5, i);
        let n = 2 + (i % 2) as usize;
        let cfg = SamplerConfig { n, heavy_tail: false, ..Default::default() };
        let (a, b) = (sample_spd(&cfg, rng), sample_spd(&cfg, rng));
        let g = random_invertible(n, rng);
        let d = dist_affine(&a, &b).unwrap();
        let dg = dist_affine(&a.congruence(&g).unwrap(), &b.congruence(&g).unwrap()).unwrap();
        worst_affine = worst_affine.max((dg - d).abs() / d);

        let u = g.scale(g.det().abs().powf(-1.0 / n as f64));
        let dc = dist_cone(&embed(&a), &embed(&b));
        let dcu = dist_cone(&embed(&a.congruence(&u).unwrap()), &embed(&b.congruence(&u).unwrap()));
        worst_cone = worst_cone.max((dcu - dc).abs() / dc);
    }
    outcome(
        worst_affine <= 1e-10 && worst_cone <= 1e-10,
        format!("1000 triples, affine rel err {worst_affine:.3e}, cone rel err {worst_cone:.3e} (tol 1e-10)"),
    )
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut through_apex = 0;
    for i in 0..1_000u64 {
        let rng = &mut stream(SEED + 6, i);
        let n = 2 + (i % 2) as usize;
        let cfg = SamplerConfig { n, apex_probability: 0.05, heavy_tail: i % 4 != 0, ..Default::default() };
        let p = sample_cone_point(&cfg, rng);
        let q = if i % 4 == 0 && !p.is_apex() {
            // fiber far enough from p's that the angle is at least pi
            let x1 = p.direction().unwrap();
            let u = (dist_affine(x1, &SpdMatrix::identity(n)).unwrap() + PI / angle_scale(n) + 0.5) / SQRT_2;
            let mut d = vec![1.0; n];
            (d[0], d[1]) = (u.exp(), (-u).exp());
            let far = UnitDetSpd::new(SpdMatrix::diag(&d).unwrap()).unwrap();
            ConePoint::ray(rng.random_range(0.1..5.0), far).unwrap()
        } else {
            sample_cone_point(&cfg, rng)
        };
        if let (Ok(theta), true) = (angle(&p, &q), !p.is_apex() && !q.is_apex()) {
            if theta >= PI {
                through_apex += 1;
            }
        }
        let d = dist_cone(&p, &q);
        for _ in 0..4 {
            let (s, u): (f64, f64) = (rng.random(), rng.random());
            let gap = dist_cone(&geodesic_cone(&p, &q, s), &geodesic_cone(&p, &q, u));
            worst = worst.max((gap - (s - u).abs() * d).abs());
        }
        let m = midpoint(&p, &q);
        worst = worst.max((dist_cone(&p, &m) - 0.5 * d).abs()).max((dist_cone(&m, &q) - 0.5 * d).abs());
    }
    outcome(
        worst <= 1e-9 && through_apex > 0,
        format!("1000 pairs ({through_apex} through the apex), max error {worst:.3e} (tol 1e-9)"),
    )
}

fn criterion_7() -> Outcome {
    let eps = 1e-3;
    let mut worst: f64 = 0.0;
    let mut apexes = 0;
    let mut all_ok = true;
    for i in 0..100u64 {
        let rng = &mut stream(SEED + 7, i);
        let n = 2 + (i % 3) as usize;
        let cfg = SamplerConfig { n, apex_probability: 0.2, ..Default::default() };
        let p = if i == 0 { ConePoint::Apex } else { sample_cone_point(&cfg, rng) };
        apexes += p.is_apex() as usize;
        match approximate_by_positive(&p, eps, n) {
            Ok(a) => {
                let d = dist_cone(&embed(&a), &p);
                worst = worst.max(d);
                all_ok &= d < eps;
            }
            Err(_) => all_ok = false,
        }
    }
    outcome(all_ok, format!("100 points ({apexes} apex), max distance {worst:.3e} < eps = 1e-3"))
}

fn criterion_8() -> Outcome {
    let space = Arc::new(SampleSpace::uniform(2, 32));
    let ids: Vec<String> = space.atoms().iter().map(|a| a.id.clone()).collect();
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let rng = &mut stream(SEED + 8, i);
        let cfg = SamplerConfig { n: 2, ..Default::default() };
        let (f, g) = (sample_field(&cfg, &space, rng), sample_field(&cfg, &space, rng));
        let mut image = ids.clone();
        for k in (1..image.len()).rev() {
            image.swap(k, rng.random_range(0..=k));
        }
        let beta: BTreeMap<String, String> = ids.iter().cloned().zip(image).collect();
        let d = field_dist(&f, &g).unwrap();
        let dr = field_dist(&reindex(&f, &beta, &space).unwrap(), &reindex(&g, &beta, &space).unwrap()).unwrap();
        worst = worst.max(if d > 0.0 { (dr - d).abs() / d } else { dr });
    }
    outcome(worst <= 1e-15, format!("100 field pairs x bijections on 32 atoms, max rel err {worst:.3e} (tol 1e-15)"))
}

fn criterion_9() -> Outcome {
    let mut worst_residual: f64 = 0.0;
    let mut objective_ok = true;
    let mut failures = 0;
    let mut first_error = String::new();
    for i in 0..100u64 {
        let rng = &mut stream(SEED + 9, i);
        let n = 2 + (i % 2) as usize;
        let cfg = SamplerConfig { n, ..Default::default() };
        let pts: Vec<ConePoint> = (0..3).map(|_| sample_cone_point(&cfg, rng)).collect();
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let w: Vec<f64> = raw.iter().map(|x| x / raw.iter().sum::<f64>()).collect();
        let mean = match frechet_mean(&pts, &w) {
            Ok(m) => m,
            Err(e) => {
                if failures == 0 {
                    first_error = format!("; first error (triple {i}): {e}");
                }
                failures += 1;
                continue;
            }
        };
        let rel = if mean.scale > 0.0 { mean.residual / mean.scale } else { mean.residual };
        worst_residual = worst_residual.max(rel);
        let f = mean_objective(&mean.point, &pts, &w);
        let mut candidates = pts.clone();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            candidates.push(midpoint(&pts[a], &pts[b]));
        }
        objective_ok &= candidates.iter().all(|c| f <= mean_objective(c, &pts, &w));
    }
    outcome(
        failures == 0 && worst_residual <= 1e-7 && objective_ok,
        format!(
            "100 weighted triples, max residual/scale {worst_residual:.3e} (tol 1e-7), objective below inputs and midpoints: {objective_ok}, errors {failures}{first_error}"
        ),
    )
}

fn criterion_10() -> Outcome {
    let u = FRAC_PI_2 / angle_scale(2) / SQRT_2;
    let x1 = UnitDetSpd::identity(2);
    let y1 = UnitDetSpd::new(SpdMatrix::diag(&[u.exp(), (-u).exp()]).unwrap()).unwrap();
    let y = ConePoint::ray(2.0, x1).unwrap();
    let z = ConePoint::ray(2.0, y1).unwrap();
    let theta = angle(&y, &z).unwrap();
    let dyz = dist_cone(&y, &z);
    let m = midpoint(&y, &z);
    let margin = cn_check(&ConePoint::Apex, &y, &z);
    let errs = [
        (theta - FRAC_PI_2).abs(),
        (dyz - 2.0 * SQRT_2).abs(),
        (m.radius() - SQRT_2).abs(),
        (dist_cone(&ConePoint::Apex, &m) - SQRT_2).abs(),
        margin.abs(),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst <= 1e-10,
        format!(
            "d(y,z) = {dyz:.15}, |m| = {:.15}, margin = {margin:.3e}, max error {worst:.3e} (tol 1e-10)",
            m.radius()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence (ebin oracle vs cone distance, 1e-2 rel)", criterion_1),
        ("oracle calibration (affine oracle vs closed form, 1e-3 rel)", criterion_2),
        ("CN inequality on cone and field triples (margin >= -1e-9)", criterion_3),
        ("Pythagorean splitting (1e-9 rel)", criterion_4),
        ("unimodular and congruence invariance (1e-10 rel)", criterion_5),
        ("geodesic and midpoint contracts (1e-9)", criterion_6),
        ("density of positive matrices (eps = 1e-3)", criterion_7),
        ("invariance under measure-preserving reindexing (1e-15 rel)", criterion_8),
        ("Frechet mean residual and optimality", criterion_9),
        ("flat-sector hand check (1e-10)", criterion_10),
    ];
    // optional arguments select criteria by number, e.g. `-- 4 9`
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !selected.is_empty() && !selected.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = run();
        let status = if o.passed { "PASS" } else { "FAIL" };
        failed += !o.passed as usize;
        println!("{status} criterion {:>2}: {name} -- {} [{:.2}s]", i + 1, o.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
