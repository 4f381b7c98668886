use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::stats::Estimate;
use super::{ExperimentConfig, OutputFormat};
use crate::error::Result;
use crate::model::ModelParams;

/// One estimated quantity with its interval, as emitted to `estimates.*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub experiment: String,
    pub label: String,
    pub params: ModelParams,
    pub point: f64,
    pub ci: [f64; 2],
    pub confidence: f64,
    pub n: u64,
    /// Closed-form bound the estimate is compared against, if any.
    pub bound: Option<f64>,
    pub vacuous_flag: Option<bool>,
    pub seed: u64,
}

impl EstimateRecord {
    pub fn new(config: &ExperimentConfig, label: impl Into<String>, est: &Estimate) -> Self {
        Self {
            experiment: config.experiment.name().to_string(),
            label: label.into(),
            params: config.params.clone(),
            point: est.point,
            ci: [est.ci_low, est.ci_high],
            confidence: est.confidence,
            n: est.n,
            bound: None,
            vacuous_flag: None,
            seed: config.master_seed,
        }
    }

    pub fn with_params(mut self, params: &ModelParams) -> Self {
        self.params = params.clone();
        self
    }

    pub fn with_bound(mut self, bound: f64, vacuous: bool) -> Self {
        self.bound = Some(bound);
        self.vacuous_flag = Some(vacuous);
        self
    }
}

/// A named CSV file produced by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub csv: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub estimates: Vec<EstimateRecord>,
    pub report: Value,
    pub tables: Vec<Table>,
    /// Deterministic invariants that did not hold.
    pub failures: Vec<String>,
}

impl ExperimentOutput {
    pub fn new(report: Value) -> Self {
        Self {
            estimates: Vec::new(),
            report,
            tables: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// File names and contents, in a fixed order.
    pub fn render(&self, format: OutputFormat) -> Result<Vec<(String, Vec<u8>)>> {
        let mut files = Vec::new();
        match format {
            OutputFormat::Json => {
                if !self.estimates.is_empty() {
                    files.push(("estimates.json".to_string(), pretty(&serde_json::to_value(&self.estimates)?)?));
                }
                files.push(("report.json".to_string(), pretty(&self.report)?));
            }
            OutputFormat::Csv => {
                if !self.estimates.is_empty() {
                    files.push(("estimates.csv".to_string(), estimates_csv(&self.estimates)?));
                }
                files.push(("report.csv".to_string(), flat_csv(&self.report)?));
            }
        }
        for t in &self.tables {
            files.push((format!("{}.csv", t.name), t.csv.clone()));
        }
        Ok(files)
    }

    /// Writes every rendered file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for (name, bytes) in self.render(format)? {
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn pretty(v: &Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn estimates_csv(records: &[EstimateRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "experiment", "label", "n_agents", "n_arms", "lambda", "mu", "p", "point", "ci_low", "ci_high",
        "confidence", "n", "bound", "vacuous_flag", "seed",
    ])?;
    for r in records {
        let p = r.params.arm_means().iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        w.write_record([
            r.experiment.clone(),
            r.label.clone(),
            r.params.n_agents().to_string(),
            r.params.n_arms().to_string(),
            r.params.clock_rate().to_string(),
            r.params.explore_prob().to_string(),
            p,
            r.point.to_string(),
            r.ci[0].to_string(),
            r.ci[1].to_string(),
            r.confidence.to_string(),
            r.n.to_string(),
            opt(r.bound),
            opt(r.vacuous_flag),
            r.seed.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// `key,value` rows with dotted paths for nested objects and arrays.
fn flat_csv(report: &Value) -> Result<Vec<u8>> {
    fn walk(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, v)| walk(&join(k), v, rows)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| walk(&join(&i.to_string()), v, rows)),
            Value::String(s) => rows.push((prefix.to_string(), s.clone())),
            Value::Null => rows.push((prefix.to_string(), String::new())),
            other => rows.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut rows = Vec::new();
    walk("", report, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flattens_nested_report() {
        let bytes = flat_csv(&json!({"a": {"b": 1.5, "c": [true, null]}, "d": "x"})).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "key,value\na.b,1.5\na.c.0,true\na.c.1,\nd,x\n");
    }

    #[test]
    fn renders_in_fixed_order() {
        let mut out = ExperimentOutput::new(json!({"k": 1}));
        out.tables.push(Table {
            name: "path".into(),
            csv: b"t\n0\n".to_vec(),
        });
        let names: Vec<String> = out.render(OutputFormat::Csv).unwrap().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["report.csv", "path.csv"]);
        let dir = tempfile::tempdir().unwrap();
        let paths = out.write_to(dir.path(), OutputFormat::Json).unwrap();
        assert_eq!(fs::read_to_string(&paths[0]).unwrap(), "{\n  \"k\": 1\n}\n");
    }
}
