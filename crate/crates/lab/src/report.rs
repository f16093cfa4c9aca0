//! Metric reports: typed key columns, one metric per row, CSV and JSON
//! emitters with byte-deterministic output.
//!
//! CSV column order is fixed: `experiment,figure,<keys...>,metric,value,
//! stderr,units`. Floats are printed with nine significant digits; rows are
//! sorted by key tuple then metric name; duplicate `(keys, metric)` tuples
//! are an error.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("duplicate record: keys ({keys}) metric {metric}")]
    DuplicateKey { keys: String, metric: String },
    #[error("record has {got} keys, report declares {want}")]
    KeyArity { got: usize, want: usize },
    #[error("text field contains a reserved character: {0:?}")]
    BadText(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum KeyValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl KeyValue {
    fn csv(&self) -> String {
        match self {
            KeyValue::Int(v) => v.to_string(),
            KeyValue::Float(v) => format_sig9(*v),
            KeyValue::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            KeyValue::Int(v) => json!(v),
            KeyValue::Float(v) => json!(v),
            KeyValue::Text(s) => json!(s),
        }
    }

    fn sort_class(&self) -> u8 {
        match self {
            KeyValue::Int(_) => 0,
            KeyValue::Float(_) => 1,
            KeyValue::Text(_) => 2,
        }
    }
}

fn cmp_key(a: &KeyValue, b: &KeyValue) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    match (a, b) {
        (KeyValue::Int(x), KeyValue::Int(y)) => x.cmp(y),
        (KeyValue::Float(x), KeyValue::Float(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
        (KeyValue::Int(x), KeyValue::Float(y)) => {
            (*x as f64).partial_cmp(y).unwrap_or(Ordering::Equal)
        }
        (KeyValue::Float(x), KeyValue::Int(y)) => {
            x.partial_cmp(&(*y as f64)).unwrap_or(Ordering::Equal)
        }
        (KeyValue::Text(x), KeyValue::Text(y)) => x.cmp(y),
        _ => a.sort_class().cmp(&b.sort_class()),
    }
}

/// Nine significant digits, scientific for anything that needs it.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.8e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub keys: Vec<KeyValue>,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub units: String,
}

/// Records sharing one experiment id, figure tag, and key schema.
#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: String,
    pub figure: String,
    pub key_names: Vec<String>,
    records: Vec<MetricRecord>,
}

impl Report {
    pub fn new(experiment: &str, figure: &str, key_names: &[&str]) -> Self {
        Self {
            experiment: experiment.to_string(),
            figure: figure.to_string(),
            key_names: key_names.iter().map(|s| s.to_string()).collect(),
            records: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        keys: Vec<KeyValue>,
        metric: &str,
        value: f64,
        stderr: Option<f64>,
        units: &str,
    ) -> Result<(), ReportError> {
        if keys.len() != self.key_names.len() {
            return Err(ReportError::KeyArity { got: keys.len(), want: self.key_names.len() });
        }
        self.records.push(MetricRecord {
            keys,
            metric: metric.to_string(),
            value,
            stderr,
            units: units.to_string(),
        });
        Ok(())
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    fn sorted_checked(&self) -> Result<Vec<&MetricRecord>, ReportError> {
        let mut rows: Vec<&MetricRecord> = self.records.iter().collect();
        rows.sort_by(|a, b| {
            for (x, y) in a.keys.iter().zip(&b.keys) {
                let ord = cmp_key(x, y);
                if ord != std::cmp::Ordering::Equal {
                    return ord;
                }
            }
            a.metric.cmp(&b.metric)
        });
        for w in rows.windows(2) {
            if w[0].keys == w[1].keys && w[0].metric == w[1].metric {
                return Err(ReportError::DuplicateKey {
                    keys: w[0].keys.iter().map(|k| k.csv()).collect::<Vec<_>>().join("|"),
                    metric: w[0].metric.clone(),
                });
            }
        }
        for r in &rows {
            for k in &r.keys {
                if let KeyValue::Text(s) = k {
                    check_text(s)?;
                }
            }
            check_text(&r.metric)?;
            check_text(&r.units)?;
        }
        Ok(rows)
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        let rows = self.sorted_checked()?;
        let mut out = String::new();
        out.push_str("experiment,figure");
        for k in &self.key_names {
            out.push(',');
            out.push_str(k);
        }
        out.push_str(",metric,value,stderr,units\n");
        for r in rows {
            out.push_str(&self.experiment);
            out.push(',');
            out.push_str(&self.figure);
            for k in &r.keys {
                out.push(',');
                out.push_str(&k.csv());
            }
            out.push(',');
            out.push_str(&r.metric);
            out.push(',');
            out.push_str(&format_sig9(r.value));
            out.push(',');
            if let Some(se) = r.stderr {
                out.push_str(&format_sig9(se));
            }
            out.push(',');
            out.push_str(&r.units);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<Value, ReportError> {
        let rows = self.sorted_checked()?;
        let mut arr = Vec::with_capacity(rows.len());
        for r in rows {
            let mut obj = serde_json::Map::new();
            obj.insert("experiment".into(), json!(self.experiment));
            obj.insert("figure".into(), json!(self.figure));
            for (name, k) in self.key_names.iter().zip(&r.keys) {
                obj.insert(name.clone(), k.json());
            }
            obj.insert("metric".into(), json!(r.metric));
            obj.insert("value".into(), json!(r.value));
            obj.insert("stderr".into(), r.stderr.map_or(Value::Null, |v| json!(v)));
            obj.insert("units".into(), json!(r.units));
            arr.push(Value::Object(obj));
        }
        Ok(Value::Array(arr))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ReportError> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_csv()?.as_bytes())?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ReportError> {
        let mut f = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &self.to_json()?)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Parses a JSON report back into records (order-insensitive equality
    /// is up to the caller).
    pub fn from_json(
        experiment: &str,
        figure: &str,
        key_names: &[&str],
        value: &Value,
    ) -> Result<Self, ReportError> {
        let mut report = Report::new(experiment, figure, key_names);
        for row in value.as_array().into_iter().flatten() {
            let keys = key_names
                .iter()
                .map(|k| {
                    let v = &row[*k];
                    if let Some(i) = v.as_i64() {
                        KeyValue::Int(i)
                    } else if let Some(f) = v.as_f64() {
                        KeyValue::Float(f)
                    } else {
                        KeyValue::Text(v.as_str().unwrap_or_default().to_string())
                    }
                })
                .collect();
            report.push(
                keys,
                row["metric"].as_str().unwrap_or_default(),
                row["value"].as_f64().unwrap_or(f64::NAN),
                row["stderr"].as_f64(),
                row["units"].as_str().unwrap_or_default(),
            )?;
        }
        Ok(report)
    }
}

fn check_text(s: &str) -> Result<(), ReportError> {
    if s.contains(',') || s.contains('\n') || s.contains('"') {
        return Err(ReportError::BadText(s.to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new("demo", "fig1", &["layer"]);
        r.push(vec![KeyValue::Int(10)], "avg_cosine", 0.25, Some(0.003), "cosine").unwrap();
        r.push(vec![KeyValue::Int(2)], "avg_cosine", 0.5, None, "cosine").unwrap();
        r.push(vec![KeyValue::Int(2)], "drift_norm", 1.75, None, "l2").unwrap();
        r
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = Report::new("demo", "fig0", &["a", "b"]);
        assert_eq!(r.to_csv().unwrap(), "experiment,figure,a,b,metric,value,stderr,units\n");
    }

    #[test]
    fn rows_sorted_numerically_not_lexically() {
        let csv = sample().to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("demo,fig1,2,avg_cosine"));
        assert!(lines[2].starts_with("demo,fig1,2,drift_norm"));
        assert!(lines[3].starts_with("demo,fig1,10,avg_cosine"));
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1.00000000e0");
        assert_eq!(format_sig9(-0.25), "-2.50000000e-1");
        assert_eq!(format_sig9(123456789.0), "1.23456789e8");
        assert_eq!(format_sig9(core::f64::consts::PI), "3.14159265e0");
    }

    #[test]
    fn duplicate_key_tuple_is_an_error() {
        let mut r = sample();
        r.push(vec![KeyValue::Int(2)], "avg_cosine", 0.9, None, "cosine").unwrap();
        assert!(matches!(r.to_csv(), Err(ReportError::DuplicateKey { .. })));
    }

    #[test]
    fn records_differing_only_in_value_are_duplicates() {
        let mut r = Report::new("demo", "fig1", &["layer"]);
        r.push(vec![KeyValue::Int(0)], "m", 1.0, None, "").unwrap();
        r.push(vec![KeyValue::Int(0)], "m", 2.0, None, "").unwrap();
        assert!(matches!(r.to_json(), Err(ReportError::DuplicateKey { .. })));
    }

    #[test]
    fn json_round_trip_preserves_records() {
        let r = sample();
        let v = r.to_json().unwrap();
        let back = Report::from_json("demo", "fig1", &["layer"], &v).unwrap();
        let mut a = r.sorted_checked().unwrap();
        let mut b = back.sorted_checked().unwrap();
        a.sort_by(|x, y| x.metric.cmp(&y.metric));
        b.sort_by(|x, y| x.metric.cmp(&y.metric));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.keys, y.keys);
            assert_eq!(x.metric, y.metric);
            assert_eq!(x.value, y.value);
            assert_eq!(x.stderr, y.stderr);
        }
    }

    #[test]
    fn csv_bytes_are_deterministic() {
        assert_eq!(sample().to_csv().unwrap(), sample().to_csv().unwrap());
    }

    #[test]
    fn reserved_characters_rejected() {
        let mut r = Report::new("demo", "figX", &["tag"]);
        r.push(vec![KeyValue::Text("a,b".into())], "m", 1.0, None, "").unwrap();
        assert!(matches!(r.to_csv(), Err(ReportError::BadText(_))));
    }
}
