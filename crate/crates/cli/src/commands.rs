//! One function per subcommand. Each returns a report and whether the
//! command's own verification passed.

use ebin_core::cone::{
    angle_scale, dist_branch, dist_cone, frechet_mean, geodesic_cone, midpoint, ConePoint, DistBranch,
};
use ebin_core::error::GeomError;
use ebin_core::field::{field_dist, field_geodesic, field_mean, per_atom_dists, FieldError, MetricField};
use ebin_core::harness::{run_suite, SamplerConfig, SuiteKind, SuiteOptions, SuiteReport};
use ebin_core::oracle::MetricKind;
use serde_json::json;

use crate::input::{batch, Batch, Loaded, Payload};
use crate::output::{field_json, float, point_cells, point_header, point_json, Report};
use crate::CliError;

/// Default relative threshold on the first-order residual of a mean.
pub const MEAN_RESIDUAL_TOL: f64 = 1e-7;

fn branch_name(b: DistBranch) -> &'static str {
    match b {
        DistBranch::Apex => "apex",
        DistBranch::Sector => "sector",
        DistBranch::ThroughApex => "through_apex",
    }
}

fn dim_of(points: &[ConePoint], fallback: Option<usize>) -> usize {
    points.iter().find_map(ConePoint::dim).or(fallback).unwrap_or(0)
}

fn field_err(e: FieldError) -> CliError {
    match e {
        FieldError::Atom { id, source: source @ GeomError::MeanNoConvergence { .. } } => {
            CliError::Convergence(format!("atom {id:?}: {source}"))
        }
        other => CliError::Input(other.to_string()),
    }
}

fn pair(inputs: Vec<Loaded>) -> Result<Batch, CliError> {
    if inputs.len() != 2 {
        return Err(CliError::Input(format!("expected exactly two inputs, got {}", inputs.len())));
    }
    batch(inputs)
}

pub fn dist(inputs: Vec<Loaded>) -> Result<Report, CliError> {
    match pair(inputs)? {
        Batch::Points(p) => {
            let d = dist_cone(&p[0], &p[1]);
            let branch = branch_name(dist_branch(&p[0], &p[1]));
            Ok(Report {
                json: json!({"distance": d, "branch": branch}),
                rows: vec![vec!["distance".into(), "branch".into()], vec![float(d), branch.into()]],
            })
        }
        Batch::Fields(f) => {
            let d = field_dist(&f[0], &f[1]).map_err(field_err)?;
            let per = per_atom_dists(&f[0], &f[1]).map_err(field_err)?;
            let mut rows = vec![vec!["scope".into(), "atom".into(), "weight".into(), "distance".into()]];
            let mut per_atom = Vec::new();
            for ((atom, _), di) in f[0].iter().zip(&per) {
                per_atom.push(json!({"id": atom.id, "weight": atom.weight, "distance": di}));
                rows.push(vec!["atom".into(), atom.id.clone(), float(atom.weight), float(*di)]);
            }
            rows.push(vec!["total".into(), String::new(), float(f[0].space().total_weight()), float(d)]);
            Ok(Report { json: json!({"distance": d, "per_atom": per_atom}), rows })
        }
    }
}

pub fn geodesic(inputs: Vec<Loaded>, steps: usize) -> Result<Report, CliError> {
    if steps == 0 {
        return Err(CliError::Input("--steps must be at least 1".into()));
    }
    let params: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    match pair(inputs)? {
        Batch::Points(p) => {
            let n = dim_of(&p, None);
            let d = dist_cone(&p[0], &p[1]);
            let samples: Vec<ConePoint> = params.iter().map(|&s| geodesic_cone(&p[0], &p[1], s)).collect();
            let lengths = cumulative(&samples, dist_cone);
            let mut header = vec!["s".to_string(), "length".to_string()];
            header.extend(point_header(n));
            let mut rows = vec![header];
            let mut out = Vec::new();
            for ((s, q), len) in params.iter().zip(&samples).zip(&lengths) {
                out.push(json!({"s": s, "length": len, "point": point_json(q)}));
                let mut row = vec![float(*s), float(*len)];
                row.extend(point_cells(q, n));
                rows.push(row);
            }
            Ok(Report { json: json!({"distance": d, "steps": steps, "samples": out}), rows })
        }
        Batch::Fields(f) => {
            let n = f[0].space().n();
            let d = field_dist(&f[0], &f[1]).map_err(field_err)?;
            let samples = params
                .iter()
                .map(|&s| field_geodesic(&f[0], &f[1], s))
                .collect::<Result<Vec<MetricField>, _>>()
                .map_err(field_err)?;
            let lengths = cumulative(&samples, |a, b| field_dist(a, b).expect("samples share a space"));
            let mut header = vec!["s".to_string(), "length".to_string(), "atom".to_string()];
            header.extend(point_header(n));
            let mut rows = vec![header];
            let mut out = Vec::new();
            for ((s, g), len) in params.iter().zip(&samples).zip(&lengths) {
                out.push(json!({"s": s, "length": len, "field": field_json(g)}));
                for (atom, v) in g.iter() {
                    let mut row = vec![float(*s), float(*len), atom.id.clone()];
                    row.extend(point_cells(v, n));
                    rows.push(row);
                }
            }
            Ok(Report { json: json!({"distance": d, "steps": steps, "samples": out}), rows })
        }
    }
}

/// Running sums of consecutive distances, starting at 0.
fn cumulative<T>(samples: &[T], d: impl Fn(&T, &T) -> f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for w in samples.windows(2) {
        acc += d(&w[0], &w[1]);
        out.push(acc);
    }
    out
}

pub fn midpoint_cmd(inputs: Vec<Loaded>) -> Result<Report, CliError> {
    match pair(inputs)? {
        Batch::Points(p) => {
            let n = dim_of(&p, None);
            let m = midpoint(&p[0], &p[1]);
            let d = dist_cone(&p[0], &p[1]);
            let mut header = vec!["distance".to_string()];
            header.extend(point_header(n));
            let mut row = vec![float(d)];
            row.extend(point_cells(&m, n));
            Ok(Report { json: json!({"distance": d, "midpoint": point_json(&m)}), rows: vec![header, row] })
        }
        Batch::Fields(f) => {
            let n = f[0].space().n();
            let m = field_geodesic(&f[0], &f[1], 0.5).map_err(field_err)?;
            let d = field_dist(&f[0], &f[1]).map_err(field_err)?;
            let mut header = vec!["atom".to_string()];
            header.extend(point_header(n));
            let mut rows = vec![header];
            for (atom, v) in m.iter() {
                let mut row = vec![atom.id.clone()];
                row.extend(point_cells(v, n));
                rows.push(row);
            }
            Ok(Report { json: json!({"distance": d, "midpoint": field_json(&m)}), rows })
        }
    }
}

fn check_weights(weights: &[f64], k: usize) -> Result<Vec<f64>, CliError> {
    if weights.is_empty() {
        return Ok(vec![1.0 / k as f64; k]);
    }
    if weights.len() != k {
        return Err(CliError::Input(format!("{} weights for {k} inputs", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(CliError::Input(format!("weights must be finite and non-negative, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(CliError::Input("weights sum to zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Returns the report and whether every residual is below threshold.
pub fn mean(inputs: Vec<Loaded>, weights: &[f64], tolerance: Option<f64>) -> Result<(Report, bool), CliError> {
    if inputs.is_empty() {
        return Err(CliError::Input("mean needs at least one input".into()));
    }
    let w = check_weights(weights, inputs.len())?;
    let rel_tol = tolerance.unwrap_or(MEAN_RESIDUAL_TOL);
    match batch(inputs)? {
        Batch::Points(p) => {
            let n = dim_of(&p, None);
            let m = frechet_mean(&p, &w).map_err(|e| match e {
                GeomError::MeanNoConvergence { .. } => CliError::Convergence(e.to_string()),
                other => CliError::Input(other.to_string()),
            })?;
            let threshold = rel_tol * m.scale;
            let ok = m.residual <= threshold;
            let mut header = vec!["residual".to_string(), "threshold".to_string(), "iterations".to_string()];
            header.extend(point_header(n));
            let mut row = vec![float(m.residual), float(threshold), m.iterations.to_string()];
            row.extend(point_cells(&m.point, n));
            let json = json!({
                "mean": point_json(&m.point),
                "weights": w,
                "residual": m.residual,
                "scale": m.scale,
                "threshold": threshold,
                "iterations": m.iterations,
                "converged": ok,
            });
            Ok((Report { json, rows: vec![header, row] }, ok))
        }
        Batch::Fields(f) => {
            let n = f[0].space().n();
            let m = field_mean(&f, &w).map_err(field_err)?;
            let mut header = vec!["atom".to_string(), "residual".to_string(), "threshold".to_string()];
            header.extend(point_header(n));
            let mut rows = vec![header];
            let mut per_atom = Vec::new();
            let mut ok = true;
            for (((atom, v), res), scale) in m.field.iter().zip(&m.residuals).zip(&m.scales) {
                let threshold = rel_tol * scale;
                ok &= *res <= threshold;
                per_atom.push(json!({"id": atom.id, "residual": res, "scale": scale, "threshold": threshold}));
                let mut row = vec![atom.id.clone(), float(*res), float(threshold)];
                row.extend(point_cells(v, n));
                rows.push(row);
            }
            let json = json!({"mean": field_json(&m.field), "weights": w, "residuals": per_atom, "converged": ok});
            Ok((Report { json, rows }, ok))
        }
    }
}

pub struct SuiteArgs {
    pub cfg: SamplerConfig,
    pub samples: u64,
    pub opts: SuiteOptions,
}

fn suite_reports(kinds: &[SuiteKind], args: &SuiteArgs) -> (Report, bool) {
    let reports: Vec<SuiteReport> = kinds.iter().map(|&k| run_suite(k, &args.cfg, args.samples, &args.opts)).collect();
    let passed = reports.iter().all(|r| r.passed);
    let mut rows = vec![[
        "suite",
        "n",
        "seed",
        "samples",
        "tolerance",
        "max_violation",
        "mean_margin",
        "failures",
        "apex",
        "sector",
        "through_apex",
        "passed",
    ]
    .map(String::from)
    .to_vec()];
    for r in &reports {
        rows.push(vec![
            r.suite.name().to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            r.samples.to_string(),
            float(r.tolerance),
            float(r.max_violation),
            float(r.mean_margin),
            r.failure_count.to_string(),
            r.branches.apex.to_string(),
            r.branches.sector.to_string(),
            r.branches.through_apex.to_string(),
            r.passed.to_string(),
        ]);
    }
    let json = json!({
        "sampler": serde_json::to_value(&args.cfg).expect("config serializes"),
        "reports": serde_json::to_value(&reports).expect("reports serialize"),
        "passed": passed,
    });
    (Report { json, rows }, passed)
}

pub fn cat0_check(suite: Option<SuiteKind>, args: &SuiteArgs) -> (Report, bool) {
    let kinds: Vec<SuiteKind> = match suite {
        Some(k) => vec![k],
        None => SuiteKind::ALL
            .into_iter()
            .filter(|k| !matches!(k, SuiteKind::OracleEquiv | SuiteKind::OracleCalibration))
            .collect(),
    };
    suite_reports(&kinds, args)
}

pub fn oracle_check(metric: Option<MetricKind>, args: &SuiteArgs) -> (Report, bool) {
    let kinds = match metric {
        Some(MetricKind::Affine) => vec![SuiteKind::OracleCalibration],
        Some(MetricKind::Ebin) => vec![SuiteKind::OracleEquiv],
        None => vec![SuiteKind::OracleCalibration, SuiteKind::OracleEquiv],
    };
    suite_reports(&kinds, args)
}

/// Validates every input, reporting all of them. Returns `false` if any
/// input is invalid.
pub fn validate(args: &[String], strict: bool, n: Option<usize>) -> (Report, bool) {
    let mut rows = vec![["input", "status", "kind", "n", "atoms", "message"].map(String::from).to_vec()];
    let mut out = Vec::new();
    let mut all_ok = true;
    for (i, arg) in args.iter().enumerate() {
        match crate::input::load(arg, i, strict, n) {
            Ok(l) => {
                let atoms = match &l.payload {
                    Payload::Field(f) => Some(f.space().len()),
                    Payload::Point(_) => None,
                };
                out.push(json!({
                    "input": l.label, "valid": true, "kind": l.kind(), "n": l.n(),
                    "atoms": atoms, "warnings": l.warnings,
                }));
                rows.push(vec![
                    l.label.clone(),
                    "ok".into(),
                    l.kind().into(),
                    l.n().map_or(String::new(), |n| n.to_string()),
                    atoms.map_or(String::new(), |a| a.to_string()),
                    l.warnings.join("; "),
                ]);
            }
            Err(e) => {
                all_ok = false;
                let message = e.to_string();
                out.push(
                    json!({"input": arg_label(arg, i), "valid": false, "errors": message.lines().collect::<Vec<_>>()}),
                );
                rows.push(vec![
                    arg_label(arg, i),
                    "error".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    message.replace('\n', "; "),
                ]);
            }
        }
    }
    (Report { json: json!({"inputs": out, "valid": all_ok}), rows }, all_ok)
}

fn arg_label(arg: &str, i: usize) -> String {
    let t = arg.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        format!("<inline #{}>", i + 1)
    } else {
        arg.to_string()
    }
}

pub fn info(n: usize) -> Report {
    let scale = angle_scale(n);
    let json = json!({
        "name": "ebin",
        "version": env!("CARGO_PKG_VERSION"),
        "n": n,
        "angle_scale": scale,
        "identity_radius": 4.0 / (n as f64).sqrt(),
        "commands": ["dist", "geodesic", "midpoint", "mean", "cat0-check", "oracle-check", "validate", "info"],
        "suites": SuiteKind::ALL.iter().map(|k| json!({"name": k.name(), "tolerance": k.default_tolerance()})).collect::<Vec<_>>(),
        "mean_residual_tolerance": MEAN_RESIDUAL_TOL,
        "exit_codes": {"ok": 0, "verification_failure": 1, "input_error": 2, "convergence_failure": 3},
    });
    let rows = vec![
        vec!["key".into(), "value".into()],
        vec!["version".into(), env!("CARGO_PKG_VERSION").into()],
        vec!["n".into(), n.to_string()],
        vec!["angle_scale".into(), float(scale)],
        vec!["identity_radius".into(), float(4.0 / (n as f64).sqrt())],
    ];
    Report { json, rows }
}
