use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Format, ResolvedConfig};
use crate::experiments::{Experiment, Row};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ResolvedConfig,
    pub rows: Vec<Row>,
    pub summary: Row,
    pub duration_ms: u64,
}

impl ExperimentReport {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read report {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("malformed report {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn run_scenario(config: &ResolvedConfig) -> Result<ExperimentReport, CliError> {
    let experiment: Experiment = config.experiment.parse()?;
    let start = Instant::now();
    let out = experiment.run(config)?;
    Ok(ExperimentReport {
        config: config.clone(),
        rows: out.rows,
        summary: out.summary,
        duration_ms: start.elapsed().as_millis() as u64,
    })
}

/// CSV text of a cell; floats use the shortest round-trip decimal form.
pub fn cell(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => u.to_string(),
            (None, Some(i), _) => i.to_string(),
            (None, None, Some(f)) => f.to_string(),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Header from the first row's keys, LF line endings.
pub fn rows_to_csv(rows: &[Row]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    if let Some(first) = rows.first() {
        w.write_record(first.keys()).map_err(CliError::runtime)?;
        for row in rows {
            let record: Vec<String> = first.keys().map(|k| row.get(k).map(cell).unwrap_or_default()).collect();
            w.write_record(&record).map_err(CliError::runtime)?;
        }
    }
    let bytes = w.into_inner().map_err(CliError::runtime)?;
    String::from_utf8(bytes).map_err(CliError::runtime)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Writes the report where its config asks; without an output it goes to
/// stdout as JSON. Returns the paths written.
pub fn emit(report: &ExperimentReport) -> Result<Vec<PathBuf>, CliError> {
    match &report.config.output {
        None => {
            crate::app::stdout(&report.to_json());
            Ok(Vec::new())
        }
        Some(out) if out.format == Format::Json => {
            write(&out.path, &report.to_json())?;
            Ok(vec![out.path.clone()])
        }
        Some(out) => {
            write(&out.path, &rows_to_csv(&report.rows)?)?;
            let sidecar = sidecar_path(&out.path);
            write(&sidecar, &report.to_json())?;
            Ok(vec![out.path.clone(), sidecar])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn row(v: Value) -> Row {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn csv_keeps_column_order_and_formats() {
        let rows = vec![
            row(json!({"b": 1, "a": 0.1, "s": "x,y", "n": null})),
            row(json!({"b": 2, "a": 2.0, "s": "z", "n": true})),
        ];
        let text = rows_to_csv(&rows).unwrap();
        assert_eq!(text, "b,a,s,n\n1,0.1,\"x,y\",\n2,2,z,true\n");
        assert_eq!(rows_to_csv(&[]).unwrap(), "");
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar_path(Path::new("out/pns.csv")), PathBuf::from("out/pns.csv.report.json"));
    }
}
