//! Loading command inputs: file paths or inline JSON, points or fields.

use std::fs;
use std::path::Path;

use ebin_core::cone::ConePoint;
use ebin_core::field::{field_from_csv, validate_field, MetricField};
use ebin_core::io::PointDoc;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone)]
pub enum Payload {
    Point(ConePoint),
    Field(MetricField),
}

#[derive(Debug, Clone)]
pub struct Loaded {
    /// File path, or `<inline #k>` for JSON given on the command line.
    pub label: String,
    pub payload: Payload,
    pub warnings: Vec<String>,
}

impl Loaded {
    pub fn n(&self) -> Option<usize> {
        match &self.payload {
            Payload::Point(p) => p.dim(),
            Payload::Field(f) => Some(f.space().n()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.payload {
            Payload::Point(_) => "point",
            Payload::Field(_) => "field",
        }
    }
}

fn is_inline(arg: &str) -> bool {
    let t = arg.trim_start();
    t.starts_with('{') || t.starts_with('[')
}

fn parse_json(text: &str, strict: bool) -> Result<(Payload, Vec<String>), String> {
    let raw: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    if raw.get("atoms").is_some() {
        let v = validate_field(&raw, strict).map_err(|e| e.to_string())?;
        return Ok((Payload::Field(v.field), v.warnings));
    }
    let doc: PointDoc = serde_json::from_value(raw)
        .map_err(|_| "expected a point ({\"apex\": true}, {\"r\", \"x1\"}, {\"matrix\"} or a matrix literal) or a field ({\"n\", \"atoms\"})".to_string())?;
    let point = doc.to_point().map_err(|e| e.to_string())?;
    Ok((Payload::Point(point), Vec::new()))
}

/// Loads one input. `index` numbers inline arguments in error messages.
pub fn load(arg: &str, index: usize, strict: bool, n: Option<usize>) -> Result<Loaded, CliError> {
    let (label, parsed) = if is_inline(arg) {
        (format!("<inline #{}>", index + 1), parse_json(arg, strict))
    } else {
        let text = fs::read_to_string(arg).map_err(|e| CliError::Input(format!("{arg}: {e}")))?;
        let is_csv = Path::new(arg).extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let parsed = if is_csv {
            field_from_csv(&text, strict).map(|v| (Payload::Field(v.field), v.warnings)).map_err(|e| e.to_string())
        } else {
            parse_json(&text, strict)
        };
        (arg.to_string(), parsed)
    };
    let (payload, warnings) = parsed.map_err(|e| CliError::Input(format!("{label}: {e}")))?;
    let loaded = Loaded { label, payload, warnings };
    if let (Some(want), Some(got)) = (n, loaded.n()) {
        if want != got {
            return Err(CliError::Input(format!("{}: dimension {got} does not match --n {want}", loaded.label)));
        }
    }
    Ok(loaded)
}

/// Loads every input before any computation starts.
pub fn load_all(args: &[String], strict: bool, n: Option<usize>) -> Result<Vec<Loaded>, CliError> {
    args.iter().enumerate().map(|(i, a)| load(a, i, strict, n)).collect()
}

/// All points, or all fields; mixing the two is an input error.
pub enum Batch {
    Points(Vec<ConePoint>),
    Fields(Vec<MetricField>),
}

pub fn batch(inputs: Vec<Loaded>) -> Result<Batch, CliError> {
    let dims: Vec<(String, usize)> = inputs.iter().filter_map(|l| l.n().map(|n| (l.label.clone(), n))).collect();
    if let Some((first_label, first)) = dims.first() {
        if let Some((label, n)) = dims.iter().find(|(_, n)| n != first) {
            return Err(CliError::Input(format!("{label} has dimension {n} but {first_label} has dimension {first}")));
        }
    }
    if inputs.iter().all(|l| matches!(l.payload, Payload::Point(_))) {
        Ok(Batch::Points(
            inputs
                .into_iter()
                .map(|l| match l.payload {
                    Payload::Point(p) => p,
                    Payload::Field(_) => unreachable!(),
                })
                .collect(),
        ))
    } else if inputs.iter().all(|l| matches!(l.payload, Payload::Field(_))) {
        let fields: Vec<MetricField> = inputs
            .into_iter()
            .map(|l| match l.payload {
                Payload::Field(f) => f,
                Payload::Point(_) => unreachable!(),
            })
            .collect();
        if let Some(bad) = fields.iter().position(|f| f.space() != fields[0].space()) {
            return Err(CliError::Input(format!(
                "input {} lives on a different sample space (atoms and weights must match)",
                bad + 1
            )));
        }
        Ok(Batch::Fields(fields))
    } else {
        Err(CliError::Input("cannot mix points and fields in one command".into()))
    }
}
