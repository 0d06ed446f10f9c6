//! JSON representations shared by the library and the CLI.
//!
//! * matrix literal: `{"n": 2, "entries": [[1, 0], [0, 1]]}`, row-major,
//!   symmetric to `1e-9` relative;
//! * cone point: `{"apex": true}`, `{"r": 2.5, "x1": <matrix>}`, or an SPD
//!   matrix to be embedded, given as `{"matrix": <matrix>}` or a bare literal;
//! * metric field: `{"n": 2, "atoms": [{"id": "p", "weight": 0.5, "value": <point>}, ...]}`.

use serde::{Deserialize, Serialize};

use crate::cone::{embed, ConePoint};
use crate::error::{GeomError, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::spd::{SpdMatrix, UnitDetSpd};

/// Symmetry tolerance for matrices read from documents.
pub const LITERAL_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixLiteral {
    pub n: usize,
    pub entries: Vec<Vec<f64>>,
}

impl MatrixLiteral {
    pub fn to_sym(&self) -> Result<SymMatrix> {
        if self.entries.len() != self.n {
            return Err(GeomError::Malformed(format!("declared n = {} but {} rows", self.n, self.entries.len())));
        }
        if let Some(row) = self.entries.iter().find(|r| r.len() != self.n) {
            return Err(GeomError::Malformed(format!("declared n = {} but a row has {} entries", self.n, row.len())));
        }
        SymMatrix::with_tolerance(Matrix::from_rows(&self.entries)?, LITERAL_SYMMETRY_TOL)
    }

    pub fn to_spd(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.to_sym()?)
    }
}

impl From<&SymMatrix> for MatrixLiteral {
    fn from(s: &SymMatrix) -> Self {
        Self { n: s.n(), entries: s.rows() }
    }
}

/// Any of the accepted encodings of a cone point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointDoc {
    Apex { apex: bool },
    Ray { r: f64, x1: MatrixLiteral },
    Matrix { matrix: MatrixLiteral },
    Bare(MatrixLiteral),
}

impl PointDoc {
    pub fn to_point(&self) -> Result<ConePoint> {
        match self {
            Self::Apex { apex: true } => Ok(ConePoint::Apex),
            Self::Apex { apex: false } => Err(GeomError::Malformed("\"apex\": false is not a point".into())),
            Self::Ray { r, x1 } => ConePoint::ray(*r, UnitDetSpd::new(x1.to_spd()?)?),
            Self::Matrix { matrix } | Self::Bare(matrix) => Ok(embed(&matrix.to_spd()?)),
        }
    }

    /// Dimension declared by the document, `None` for the apex.
    pub fn declared_n(&self) -> Option<usize> {
        match self {
            Self::Apex { .. } => None,
            Self::Ray { x1, .. } => Some(x1.n),
            Self::Matrix { matrix } | Self::Bare(matrix) => Some(matrix.n),
        }
    }
}

impl From<&ConePoint> for PointDoc {
    fn from(p: &ConePoint) -> Self {
        match p {
            ConePoint::Apex => Self::Apex { apex: true },
            ConePoint::Ray { r, x1 } => Self::Ray { r: *r, x1: MatrixLiteral::from(x1.as_sym()) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomDoc {
    pub id: String,
    pub weight: f64,
    pub value: PointDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDoc {
    pub n: usize,
    pub atoms: Vec<AtomDoc>,
}
