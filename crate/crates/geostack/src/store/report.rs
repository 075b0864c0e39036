//! Tabular reports as JSON arrays or CSV.
//!
//! Reals use the shortest decimal form that parses back to the same bits.
//! Row types must be flat structs without optional fields: a `null` in
//! the serialized form is taken to mean a non-finite real.

use std::path::Path;

use serde::Serialize;

use super::error::{StoreError, StoreResult};
use super::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// JSON for a `.json` extension, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

fn contains_null(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Null => true,
        serde_json::Value::Array(a) => a.iter().any(contains_null),
        serde_json::Value::Object(o) => o.values().any(contains_null),
        _ => false,
    }
}

pub fn render_report<T: Serialize>(rows: &[T], format: ReportFormat) -> StoreResult<Vec<u8>> {
    let value = serde_json::to_value(rows)?;
    if contains_null(&value) {
        return Err(StoreError::NonFinite("report".into()));
    }
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(rows)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row)?;
            }
            w.into_inner().map_err(|e| StoreError::Csv(e.into_error().into()))
        }
    }
}

pub fn write_report<T: Serialize>(
    rows: &[T],
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> StoreResult<()> {
    write_atomic(path.as_ref(), &render_report(rows, format)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        name: String,
        value: f64,
        n: usize,
    }

    fn rows() -> Vec<Row> {
        [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 5e-324]
            .iter()
            .enumerate()
            .map(|(i, &value)| Row {
                name: format!("r,{i}"),
                value,
                n: i,
            })
            .collect()
    }

    #[test]
    fn json_round_trips_exactly() {
        let bytes = render_report(&rows(), ReportFormat::Json).unwrap();
        let back: Vec<Row> = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, rows());
    }

    #[test]
    fn csv_has_header_and_exact_reals() {
        let bytes = render_report(&rows(), ReportFormat::Csv).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.lines().count(), rows().len() + 1);
        assert!(text.starts_with("name,value,n\n"));
        let back: Vec<Row> = csv::Reader::from_reader(bytes.as_slice())
            .deserialize()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(back, rows());
    }

    #[test]
    fn non_finite_is_rejected() {
        let bad = [Row {
            name: "x".into(),
            value: f64::NAN,
            n: 0,
        }];
        assert_eq!(
            render_report(&bad, ReportFormat::Csv).unwrap_err().code(),
            "non-finite"
        );
    }
}
