//! Metric fields: square-integrable maps from a finite probability space into
//! the completed cone, with the `L2` distance
//!
//! ```text
//! d(f, g)^2 = sum_i w_i d_cone(f_i, g_i)^2
//! ```
//!
//! Atoms are opaque ids. Only the weights matter, so any weight-preserving
//! bijection between sample spaces is an isometry of the field spaces
//! ([`reindex`]).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::Value;
use thiserror::Error;

use crate::cone::{dist_cone, frechet_mean, geodesic_cone, midpoint, ConePoint};
use crate::error::GeomError;
use crate::io::{AtomDoc, FieldDoc, MatrixLiteral, PointDoc};
use crate::linalg::Matrix;
use crate::spd::SpdMatrix;

/// Tolerance on the total weight of a sample space.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("fields live on different sample spaces")]
    SpaceMismatch,
    #[error("duplicate atom id {0:?}")]
    DuplicateId(String),
    #[error("atom {0:?} has non-positive or non-finite weight {1}")]
    BadWeight(String, f64),
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("sample space has no atoms")]
    Empty,
    #[error("expected {expected} values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("atom {id:?}: {source}")]
    Atom { id: String, source: GeomError },
    #[error("reindexing: {0}")]
    NotBijection(String),
    #[error("reindexing maps atom {from:?} (weight {from_weight}) to {to:?} (weight {to_weight})")]
    WeightMismatch { from: String, from_weight: f64, to: String, to_weight: f64 },
    #[error("{0}")]
    Invalid(Diagnostics),
}

/// One problem found while validating a field document.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// Offending atom id, or its position when the id itself is unusable.
    pub atom: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            match &d.atom {
                Some(a) => write!(f, "atom {a}: {}", d.message)?,
                None => write!(f, "{}", d.message)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub id: String,
    pub weight: f64,
}

/// Finite probability space, atoms kept in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpace {
    n: usize,
    atoms: Vec<Atom>,
}

impl SampleSpace {
    /// Builds a space whose weights already sum to one within [`WEIGHT_SUM_TOL`].
    pub fn new(n: usize, atoms: Vec<Atom>) -> Result<Self, FieldError> {
        let space = Self::checked(n, atoms)?;
        let total = space.total_weight();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(FieldError::WeightSum(total));
        }
        Ok(space)
    }

    /// Builds a space, rescaling the weights to sum to one. Also returns the
    /// original total.
    pub fn normalized(n: usize, atoms: Vec<Atom>) -> Result<(Self, f64), FieldError> {
        let mut space = Self::checked(n, atoms)?;
        let total = space.total_weight();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            for a in &mut space.atoms {
                a.weight /= total;
            }
        }
        Ok((space, total))
    }

    /// `k` atoms of weight `1 / k`, ids `a0000`, `a0001`, ...
    pub fn uniform(n: usize, k: usize) -> Self {
        let atoms = (0..k).map(|i| Atom { id: format!("a{i:04}"), weight: 1.0 / k as f64 }).collect();
        Self::checked(n, atoms).expect("uniform space is valid")
    }

    fn checked(n: usize, mut atoms: Vec<Atom>) -> Result<Self, FieldError> {
        if atoms.is_empty() {
            return Err(FieldError::Empty);
        }
        if let Some(a) = atoms.iter().find(|a| !(a.weight > 0.0) || !a.weight.is_finite()) {
            return Err(FieldError::BadWeight(a.id.clone(), a.weight));
        }
        atoms.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = atoms.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(FieldError::DuplicateId(w[0].id.clone()));
        }
        Ok(Self { n, atoms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.atoms.binary_search_by(|a| a.id.as_str().cmp(id)).ok()
    }
}

/// One cone point per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    space: Arc<SampleSpace>,
    values: Vec<ConePoint>,
}

impl MetricField {
    /// `values` are given in the space's (ascending id) atom order.
    pub fn new(space: Arc<SampleSpace>, values: Vec<ConePoint>) -> Result<Self, FieldError> {
        if values.len() != space.len() {
            return Err(FieldError::ValueCount { expected: space.len(), got: values.len() });
        }
        for (atom, v) in space.atoms.iter().zip(&values) {
            if let Some(d) = v.dim() {
                if d != space.n {
                    return Err(FieldError::Atom {
                        id: atom.id.clone(),
                        source: GeomError::DimensionMismatch { expected: space.n, got: d },
                    });
                }
            }
        }
        Ok(Self { space, values })
    }

    /// Builds a field from `(id, value)` pairs in any order.
    pub fn from_map(space: Arc<SampleSpace>, mut values: BTreeMap<String, ConePoint>) -> Result<Self, FieldError> {
        let mut ordered = Vec::with_capacity(space.len());
        for atom in &space.atoms {
            let v = values.remove(&atom.id).ok_or_else(|| {
                FieldError::Invalid(Diagnostics(vec![Diagnostic {
                    atom: Some(atom.id.clone()),
                    message: "missing value".into(),
                }]))
            })?;
            ordered.push(v);
        }
        if let Some(extra) = values.keys().next() {
            return Err(FieldError::Invalid(Diagnostics(vec![Diagnostic {
                atom: Some(extra.clone()),
                message: "not an atom of the sample space".into(),
            }])));
        }
        Self::new(space, ordered)
    }

    /// Field taking the same value on every atom.
    pub fn constant(space: Arc<SampleSpace>, value: ConePoint) -> Result<Self, FieldError> {
        let values = vec![value; space.len()];
        Self::new(space, values)
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn values(&self) -> &[ConePoint] {
        &self.values
    }

    pub fn get(&self, id: &str) -> Option<&ConePoint> {
        self.space.index_of(id).map(|i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, &ConePoint)> {
        self.space.atoms.iter().zip(&self.values)
    }

    pub fn to_doc(&self) -> FieldDoc {
        FieldDoc {
            n: self.space.n,
            atoms: self
                .iter()
                .map(|(a, v)| AtomDoc { id: a.id.clone(), weight: a.weight, value: PointDoc::from(v) })
                .collect(),
        }
    }
}

fn same_space(f: &MetricField, g: &MetricField) -> Result<(), FieldError> {
    if Arc::ptr_eq(&f.space, &g.space) || f.space == g.space {
        Ok(())
    } else {
        Err(FieldError::SpaceMismatch)
    }
}

/// Pointwise cone distances, in atom order.
pub fn per_atom_dists(f: &MetricField, g: &MetricField) -> Result<Vec<f64>, FieldError> {
    same_space(f, g)?;
    Ok(f.values.par_iter().zip(&g.values).map(|(a, b)| dist_cone(a, b)).collect())
}

/// `sqrt(sum_i w_i d_i^2)`. Terms are summed in ascending order, so the
/// value does not depend on how atoms are labelled.
pub fn field_dist(f: &MetricField, g: &MetricField) -> Result<f64, FieldError> {
    let d = per_atom_dists(f, g)?;
    let mut terms: Vec<f64> = f.space.atoms.iter().zip(&d).map(|(a, d)| a.weight * d * d).collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>().sqrt())
}

/// Pointwise geodesic.
pub fn field_geodesic(f: &MetricField, g: &MetricField, s: f64) -> Result<MetricField, FieldError> {
    same_space(f, g)?;
    let step = |a: &ConePoint, b: &ConePoint| if s == 0.5 { midpoint(a, b) } else { geodesic_cone(a, b, s) };
    let values = f.values.par_iter().zip(&g.values).map(|(a, b)| step(a, b)).collect();
    Ok(MetricField { space: f.space.clone(), values })
}

/// Result of [`field_mean`].
#[derive(Debug, Clone)]
pub struct FieldMean {
    pub field: MetricField,
    /// Per-atom first-order residuals, in atom order.
    pub residuals: Vec<f64>,
    /// Per-atom tolerance scales (weighted mean radius).
    pub scales: Vec<f64>,
}

/// Pointwise Frechet mean.
pub fn field_mean(fields: &[MetricField], weights: &[f64]) -> Result<FieldMean, FieldError> {
    let first = fields
        .first()
        .ok_or_else(|| FieldError::Atom { id: String::new(), source: GeomError::InvalidWeights("no fields".into()) })?;
    for f in fields {
        same_space(first, f)?;
    }
    let space = first.space.clone();
    let results: Vec<_> = (0..space.len())
        .into_par_iter()
        .map(|i| {
            let pts: Vec<ConePoint> = fields.iter().map(|f| f.values[i].clone()).collect();
            frechet_mean(&pts, weights).map_err(|source| FieldError::Atom { id: space.atoms[i].id.clone(), source })
        })
        .collect();
    let mut values = Vec::with_capacity(space.len());
    let mut residuals = Vec::with_capacity(space.len());
    let mut scales = Vec::with_capacity(space.len());
    for r in results {
        let m = r?;
        values.push(m.point);
        residuals.push(m.residual);
        scales.push(m.scale);
    }
    Ok(FieldMean { field: MetricField { space, values }, residuals, scales })
}

/// Transports `f` along a weight-preserving bijection of atom ids onto `target`:
/// the result takes value `f(id)` at atom `bijection[id]`.
pub fn reindex(
    f: &MetricField,
    bijection: &BTreeMap<String, String>,
    target: &Arc<SampleSpace>,
) -> Result<MetricField, FieldError> {
    if target.n != f.space.n {
        return Err(FieldError::SpaceMismatch);
    }
    if bijection.len() != f.space.len() || target.len() != f.space.len() {
        return Err(FieldError::NotBijection(format!(
            "{} source atoms, {} target atoms, {} pairs",
            f.space.len(),
            target.len(),
            bijection.len()
        )));
    }
    let mut values: Vec<Option<ConePoint>> = vec![None; target.len()];
    for (atom, v) in f.iter() {
        let to = bijection
            .get(&atom.id)
            .ok_or_else(|| FieldError::NotBijection(format!("atom {:?} is not mapped", atom.id)))?;
        let j = target
            .index_of(to)
            .ok_or_else(|| FieldError::NotBijection(format!("{to:?} is not an atom of the target")))?;
        let to_weight = target.atoms[j].weight;
        if to_weight != atom.weight {
            return Err(FieldError::WeightMismatch {
                from: atom.id.clone(),
                from_weight: atom.weight,
                to: to.clone(),
                to_weight,
            });
        }
        if values[j].is_some() {
            return Err(FieldError::NotBijection(format!("{to:?} is hit twice")));
        }
        values[j] = Some(v.clone());
    }
    let values = values.into_iter().map(|v| v.expect("bijection covers the target")).collect();
    Ok(MetricField { space: target.clone(), values })
}

/// Outcome of [`validate_field`].
#[derive(Debug, Clone)]
pub struct ValidatedField {
    pub field: MetricField,
    pub warnings: Vec<String>,
}

/// Parses and checks a field document, collecting every per-atom problem.
///
/// Weights that do not sum to one are rescaled with a warning, or rejected
/// when `strict` is set.
pub fn validate_field(raw: &Value, strict: bool) -> Result<ValidatedField, FieldError> {
    let mut diags = Vec::new();
    let diag = |atom: Option<String>, message: String| Diagnostic { atom, message };

    let n = match raw.get("n").and_then(Value::as_u64) {
        Some(n) if n >= 1 => n as usize,
        _ => {
            return Err(FieldError::Invalid(Diagnostics(vec![diag(None, "missing or invalid \"n\"".into())])));
        }
    };
    let Some(atoms) = raw.get("atoms").and_then(Value::as_array) else {
        return Err(FieldError::Invalid(Diagnostics(vec![diag(None, "missing \"atoms\" array".into())])));
    };

    let mut seen = HashSet::new();
    let mut parsed: Vec<(Atom, ConePoint)> = Vec::new();
    for (pos, entry) in atoms.iter().enumerate() {
        let label = entry.get("id").and_then(Value::as_str).map(str::to_owned).unwrap_or_else(|| format!("#{pos}"));
        let Some(id) = entry.get("id").and_then(Value::as_str) else {
            diags.push(diag(Some(label), "missing string \"id\"".into()));
            continue;
        };
        if !seen.insert(id.to_owned()) {
            diags.push(diag(Some(label), "duplicate id".into()));
            continue;
        }
        let weight = match entry.get("weight").and_then(Value::as_f64) {
            Some(w) if w > 0.0 && w.is_finite() => w,
            Some(w) => {
                diags.push(diag(Some(label), format!("weight must be positive, got {w}")));
                continue;
            }
            None => {
                diags.push(diag(Some(label), "missing numeric \"weight\"".into()));
                continue;
            }
        };
        let Some(value) = entry.get("value") else {
            diags.push(diag(Some(label), "missing value".into()));
            continue;
        };
        let doc: PointDoc = match serde_json::from_value(value.clone()) {
            Ok(d) => d,
            Err(_) => {
                diags.push(diag(Some(label), "value is neither a cone point nor a matrix literal".into()));
                continue;
            }
        };
        if let Some(dn) = doc.declared_n() {
            if dn != n {
                diags.push(diag(Some(label), format!("value has n = {dn}, field has n = {n}")));
                continue;
            }
        }
        match doc.to_point() {
            Ok(p) => parsed.push((Atom { id: id.to_owned(), weight }, p)),
            Err(e) => diags.push(diag(Some(label), e.to_string())),
        }
    }
    if atoms.is_empty() {
        diags.push(diag(None, "field has no atoms".into()));
    }
    if !diags.is_empty() {
        return Err(FieldError::Invalid(Diagnostics(diags)));
    }
    build_field(n, parsed, strict)
}

fn build_field(n: usize, parsed: Vec<(Atom, ConePoint)>, strict: bool) -> Result<ValidatedField, FieldError> {
    let mut warnings = Vec::new();
    let atoms: Vec<Atom> = parsed.iter().map(|(a, _)| a.clone()).collect();
    let values: BTreeMap<String, ConePoint> = parsed.into_iter().map(|(a, p)| (a.id, p)).collect();
    let space = if strict {
        SampleSpace::new(n, atoms)?
    } else {
        let (space, total) = SampleSpace::normalized(n, atoms)?;
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            warnings.push(format!("weights summed to {total}; rescaled to 1"));
        }
        space
    };
    Ok(ValidatedField { field: MetricField::from_map(Arc::new(space), values)?, warnings })
}

/// Reads a field from CSV rows `id, weight, a11, a12, ..., ann` (row-major
/// SPD entries). A header row is skipped when its weight column is not numeric.
pub fn field_from_csv(text: &str, strict: bool) -> Result<ValidatedField, FieldError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut diags = Vec::new();
    let mut parsed = Vec::new();
    let mut seen = HashSet::new();
    let mut n: Option<usize> = None;
    for (row, record) in reader.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                diags.push(Diagnostic { atom: Some(format!("row {row}")), message: e.to_string() });
                continue;
            }
        };
        if record.len() < 3 {
            diags.push(Diagnostic { atom: Some(format!("row {row}")), message: "too few columns".into() });
            continue;
        }
        let id = record[0].to_owned();
        let Ok(weight) = record[1].parse::<f64>() else {
            if row == 0 {
                continue;
            }
            diags.push(Diagnostic { atom: Some(id), message: "weight is not a number".into() });
            continue;
        };
        let k = record.len() - 2;
        let dim = (k as f64).sqrt().round() as usize;
        if dim * dim != k {
            diags.push(Diagnostic { atom: Some(id), message: format!("{k} matrix entries is not a square count") });
            continue;
        }
        match n {
            None => n = Some(dim),
            Some(m) if m != dim => {
                diags.push(Diagnostic { atom: Some(id), message: format!("n = {dim}, previous rows have n = {m}") });
                continue;
            }
            _ => {}
        }
        if !seen.insert(id.clone()) {
            diags.push(Diagnostic { atom: Some(id), message: "duplicate id".into() });
            continue;
        }
        if !(weight > 0.0) || !weight.is_finite() {
            diags.push(Diagnostic { atom: Some(id), message: format!("weight must be positive, got {weight}") });
            continue;
        }
        let entries: Result<Vec<f64>, _> = (2..record.len()).map(|c| record[c].parse::<f64>()).collect();
        let Ok(entries) = entries else {
            diags.push(Diagnostic { atom: Some(id), message: "non-numeric matrix entry".into() });
            continue;
        };
        let lit = Matrix::from_row_major(dim, entries).map(|m| MatrixLiteral { n: dim, entries: m.rows() });
        match lit.and_then(|l| l.to_spd()) {
            Ok(a) => parsed.push((Atom { id, weight }, crate::cone::embed(&a))),
            Err(e) => diags.push(Diagnostic { atom: Some(id), message: e.to_string() }),
        }
    }
    if parsed.is_empty() && diags.is_empty() {
        diags.push(Diagnostic { atom: None, message: "no atoms".into() });
    }
    if !diags.is_empty() {
        return Err(FieldError::Invalid(Diagnostics(diags)));
    }
    build_field(n.expect("at least one row"), parsed, strict)
}

/// Field of embedded SPD matrices, one per atom in atom order.
pub fn field_from_matrices(space: Arc<SampleSpace>, matrices: &[SpdMatrix]) -> Result<MetricField, FieldError> {
    MetricField::new(space, matrices.iter().map(crate::cone::embed).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{embed, midpoint, ConePoint};
    use serde_json::json;

    fn space2() -> Arc<SampleSpace> {
        Arc::new(
            SampleSpace::new(2, vec![Atom { id: "p".into(), weight: 0.5 }, Atom { id: "q".into(), weight: 0.5 }])
                .unwrap(),
        )
    }

    fn spd(d: &[f64]) -> SpdMatrix {
        SpdMatrix::diag(d).unwrap()
    }

    #[test]
    fn single_atom_distance_is_cone_distance() {
        let space = Arc::new(SampleSpace::uniform(2, 1));
        let (a, b) = (embed(&spd(&[2.0, 1.0])), embed(&spd(&[0.5, 3.0])));
        let f = MetricField::new(space.clone(), vec![a.clone()]).unwrap();
        let g = MetricField::new(space, vec![b.clone()]).unwrap();
        assert_eq!(field_dist(&f, &g).unwrap(), dist_cone(&a, &b));
        assert_eq!(field_dist(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn two_atom_arithmetic() {
        // same direction, radii differing by 3 and 4
        let x = crate::spd::UnitDetSpd::identity(2);
        let r = |r: f64| ConePoint::ray(r, x.clone()).unwrap();
        let f = MetricField::new(space2(), vec![r(1.0), r(1.0)]).unwrap();
        let g = MetricField::new(space2(), vec![r(4.0), r(5.0)]).unwrap();
        assert!((field_dist(&f, &g).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(per_atom_dists(&f, &g).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn space_mismatch_is_rejected() {
        let f = MetricField::constant(space2(), ConePoint::Apex).unwrap();
        let g = MetricField::constant(Arc::new(SampleSpace::uniform(2, 2)), ConePoint::Apex).unwrap();
        assert_eq!(field_dist(&f, &g), Err(FieldError::SpaceMismatch));
        assert!(field_geodesic(&f, &g, 0.5).is_err());
    }

    #[test]
    fn geodesic_examples() {
        let f = field_from_matrices(space2(), &[spd(&[2.0, 1.0]), spd(&[1.0, 1.0])]).unwrap();
        let g = field_from_matrices(space2(), &[spd(&[0.5, 3.0]), spd(&[4.0, 0.2])]).unwrap();
        assert_eq!(field_geodesic(&f, &g, 0.0).unwrap(), f);
        assert_eq!(field_geodesic(&f, &g, 1.0).unwrap(), g);
        let d = field_dist(&f, &g).unwrap();
        let h = field_geodesic(&f, &g, 0.3).unwrap();
        assert!((field_dist(&f, &h).unwrap() - 0.3 * d).abs() < 1e-9);

        let (p, q) = (embed(&spd(&[2.0, 1.0])), embed(&spd(&[0.5, 3.0])));
        let cf = MetricField::constant(space2(), p.clone()).unwrap();
        let cg = MetricField::constant(space2(), q.clone()).unwrap();
        let mid = field_geodesic(&cf, &cg, 0.5).unwrap();
        assert!(mid.values().iter().all(|v| *v == midpoint(&p, &q)));
    }

    #[test]
    fn mean_examples() {
        let f = field_from_matrices(space2(), &[spd(&[2.0, 1.0]), spd(&[1.0, 1.0])]).unwrap();
        let g = field_from_matrices(space2(), &[spd(&[0.5, 3.0]), spd(&[4.0, 0.2])]).unwrap();
        let m = field_mean(std::slice::from_ref(&f), &[1.0]).unwrap();
        assert_eq!(m.field, f);
        let m = field_mean(&[f.clone(), f.clone()], &[0.5, 0.5]).unwrap();
        assert_eq!(m.field, f);
        let m = field_mean(&[f.clone(), g.clone()], &[0.5, 0.5]).unwrap();
        let mid = field_geodesic(&f, &g, 0.5).unwrap();
        assert!(field_dist(&m.field, &mid).unwrap() < 1e-8);
    }

    #[test]
    fn reindex_examples() {
        let f = field_from_matrices(space2(), &[spd(&[2.0, 1.0]), spd(&[1.0, 1.0])]).unwrap();
        let g = field_from_matrices(space2(), &[spd(&[0.5, 3.0]), spd(&[4.0, 0.2])]).unwrap();
        let id: BTreeMap<_, _> = [("p", "p"), ("q", "q")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert_eq!(reindex(&f, &id, &space2()).unwrap(), f);

        let swap: BTreeMap<_, _> =
            [("p", "q"), ("q", "p")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let (fs, gs) = (reindex(&f, &swap, &space2()).unwrap(), reindex(&g, &swap, &space2()).unwrap());
        assert_eq!(fs.get("q"), f.get("p"));
        assert_eq!(field_dist(&fs, &gs).unwrap(), field_dist(&f, &g).unwrap());

        let lopsided = Arc::new(
            SampleSpace::new(2, vec![Atom { id: "p".into(), weight: 0.25 }, Atom { id: "q".into(), weight: 0.75 }])
                .unwrap(),
        );
        assert!(matches!(reindex(&f, &id, &lopsided), Err(FieldError::WeightMismatch { .. })));
        let collide: BTreeMap<_, _> =
            [("p", "p"), ("q", "p")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert!(matches!(reindex(&f, &collide, &space2()), Err(FieldError::NotBijection(_))));
    }

    #[test]
    fn validate_well_formed_document() {
        let doc = json!({
            "n": 2,
            "atoms": [
                {"id": "q", "weight": 0.5, "value": {"apex": true}},
                {"id": "p", "weight": 0.5, "value": {"matrix": {"n": 2, "entries": [[2, 0], [0, 1]]}}}
            ]
        });
        let v = validate_field(&doc, true).unwrap();
        assert!(v.warnings.is_empty());
        assert_eq!(v.field.space().atoms()[0].id, "p");
        assert_eq!(v.field.get("q"), Some(&ConePoint::Apex));
    }

    #[test]
    fn validate_weight_sum() {
        let doc = json!({
            "n": 2,
            "atoms": [
                {"id": "p", "weight": 0.45, "value": {"n": 2, "entries": [[1, 0], [0, 1]]}},
                {"id": "q", "weight": 0.45, "value": {"n": 2, "entries": [[1, 0], [0, 1]]}}
            ]
        });
        let v = validate_field(&doc, false).unwrap();
        assert_eq!(v.warnings.len(), 1);
        assert!((v.field.space().total_weight() - 1.0).abs() < 1e-15);
        assert!(matches!(validate_field(&doc, true), Err(FieldError::WeightSum(_))));
    }

    #[test]
    fn validate_reports_every_bad_atom() {
        let doc = json!({
            "n": 2,
            "atoms": [
                {"id": "bent", "weight": 0.25, "value": {"n": 2, "entries": [[1, 0.5], [0.2, 1]]}},
                {"id": "neg", "weight": 0.25, "value": {"n": 2, "entries": [[1, 2], [2, 1]]}},
                {"id": "ok", "weight": 0.25, "value": {"apex": true}},
                {"id": "ok", "weight": 0.25, "value": {"apex": true}},
                {"id": "empty", "weight": 0.25}
            ]
        });
        let Err(FieldError::Invalid(d)) = validate_field(&doc, false) else { panic!("expected diagnostics") };
        let atoms: Vec<_> = d.0.iter().map(|d| d.atom.clone().unwrap()).collect();
        assert_eq!(atoms, vec!["bent", "neg", "ok", "empty"]);
        assert!(d.0[0].message.contains("symmetric"));
        assert!(d.0[3].message.contains("missing value"));
    }

    #[test]
    fn csv_import() {
        let text = "id,weight,a11,a12,a21,a22\np,0.5,2,0,0,1\nq,0.5,1,0.1,0.1,1\n";
        let v = field_from_csv(text, true).unwrap();
        assert_eq!(v.field.space().len(), 2);
        assert_eq!(v.field.get("p"), Some(&embed(&spd(&[2.0, 1.0]))));
        let bad = "p,0.5,2,0,0,1\nq,0.5,1,0.1,0.3,1\n";
        let Err(FieldError::Invalid(d)) = field_from_csv(bad, true) else { panic!() };
        assert_eq!(d.0[0].atom.as_deref(), Some("q"));
    }

    #[test]
    fn doc_round_trip() {
        let f = field_from_matrices(space2(), &[spd(&[2.0, 1.0]), spd(&[1.0, 1.0])]).unwrap();
        let text = serde_json::to_value(f.to_doc()).unwrap();
        let back = validate_field(&text, true).unwrap();
        assert_eq!(back.field, f);
    }
}
