//! Report rendering. Every float is printed with 17 significant digits.

use std::io::{self, Write};

use clap::ValueEnum;
use ebin_core::cone::ConePoint;
use ebin_core::field::MetricField;
use ebin_core::io::PointDoc;
use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// A command result in both renderings.
pub struct Report {
    pub json: Value,
    /// Header first.
    pub rows: Vec<Vec<String>>,
}

struct Sci;

impl Formatter for Sci {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(float(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

/// `{:.16e}`: exactly 17 significant digits, round-trips every `f64`.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json_string(v: &Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sci);
    v.serialize(&mut ser).expect("serializing a JSON value cannot fail");
    String::from_utf8(out).expect("JSON output is UTF-8")
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Json => to_json_string(&report.json) + "\n",
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &report.rows {
                w.write_record(row).expect("writing to memory");
            }
            String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV output is UTF-8")
        }
    }
}

pub fn point_json(p: &ConePoint) -> Value {
    serde_json::to_value(PointDoc::from(p)).expect("points serialize")
}

pub fn field_json(f: &MetricField) -> Value {
    serde_json::to_value(f.to_doc()).expect("fields serialize")
}

/// Column names for a point of dimension `n`: `apex, r, x1_11, x1_12, ...`.
pub fn point_header(n: usize) -> Vec<String> {
    let mut h = vec!["apex".to_string(), "r".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            h.push(format!("x1_{i}{j}"));
        }
    }
    h
}

pub fn point_cells(p: &ConePoint, n: usize) -> Vec<String> {
    match p {
        ConePoint::Apex => {
            let mut c = vec!["true".to_string(), float(0.0)];
            c.extend(std::iter::repeat_n(String::new(), n * n));
            c
        }
        ConePoint::Ray { r, x1 } => {
            let mut c = vec!["false".to_string(), float(*r)];
            c.extend(x1.as_matrix().as_slice().iter().map(|v| float(*v)));
            c
        }
    }
}
