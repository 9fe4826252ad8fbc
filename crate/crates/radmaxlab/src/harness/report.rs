//! Report structure: a config echo, per-case rows whose pass/fail is
//! recomputable from the stored numbers, aggregates, and a metadata block
//! kept outside the deterministic body.

use super::config::{ExperimentConfig, ReportFormat};
use crate::error::Result;
use crate::space::NormEstimate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// pass ⇔ value ≤ tolerance
    ValueLeTol,
    /// pass ⇔ value ≥ tolerance
    ValueGeTol,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub case: usize,
    pub label: String,
    pub value: f64,
    pub stderr: f64,
    pub method: String,
    pub semantic: String,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub check: Option<CheckKind>,
    #[serde(default)]
    pub pass: Option<bool>,
    #[serde(default)]
    pub note: Option<String>,
}

impl Row {
    pub fn recompute_pass(&self) -> Option<bool> {
        match (self.check, self.tolerance) {
            (Some(CheckKind::ValueLeTol), Some(t)) => Some(self.value <= t),
            (Some(CheckKind::ValueGeTol), Some(t)) => Some(self.value >= t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub unix_seconds: u64,
    pub crate_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    /// The inequality or identity the table addresses, written out.
    pub inequality: String,
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    pub aggregates: BTreeMap<String, f64>,
    pub metadata: Metadata,
}

impl Report {
    pub fn new(experiment: &str, inequality: &str, config: &ExperimentConfig) -> Report {
        Report {
            experiment: experiment.to_string(),
            inequality: inequality.to_string(),
            config: config.clone(),
            rows: Vec::new(),
            aggregates: BTreeMap::new(),
            metadata: Metadata {
                unix_seconds: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }

    pub fn push_value(&mut self, case: usize, label: &str, value: f64) {
        self.rows.push(Row {
            case,
            label: label.to_string(),
            value,
            stderr: 0.0,
            method: "exact_enum".into(),
            semantic: "exact".into(),
            tolerance: None,
            check: None,
            pass: None,
            note: None,
        });
    }

    pub fn push_estimate(&mut self, case: usize, label: &str, est: &NormEstimate) {
        let method = match est.method {
            crate::space::EstimateMethod::ExactEnum => "exact_enum",
            crate::space::EstimateMethod::MonteCarlo => "monte_carlo",
            crate::space::EstimateMethod::ClosedForm => "closed_form",
        };
        let semantic = match est.semantic {
            crate::space::EstimateSemantic::Exact => "exact",
            crate::space::EstimateSemantic::LowerBound => "lower_bound",
            crate::space::EstimateSemantic::Estimate => "estimate",
        };
        self.rows.push(Row {
            case,
            label: label.to_string(),
            value: est.value,
            stderr: est.stderr,
            method: method.to_string(),
            semantic: semantic.to_string(),
            tolerance: None,
            check: None,
            pass: None,
            note: None,
        });
    }

    pub fn push_check(&mut self, case: usize, label: &str, value: f64, tol: f64, kind: CheckKind) {
        let pass = match kind {
            CheckKind::ValueLeTol => value <= tol,
            CheckKind::ValueGeTol => value >= tol,
        };
        self.rows.push(Row {
            case,
            label: label.to_string(),
            value,
            stderr: 0.0,
            method: "exact_enum".into(),
            semantic: "exact".into(),
            tolerance: Some(tol),
            check: Some(kind),
            pass: Some(pass),
            note: None,
        });
    }

    pub fn push_note(&mut self, case: usize, label: &str, note: &str) {
        self.rows.push(Row {
            case,
            label: label.to_string(),
            value: f64::NAN,
            stderr: 0.0,
            method: "none".into(),
            semantic: "note".into(),
            tolerance: None,
            check: None,
            pass: None,
            note: Some(note.to_string()),
        });
    }

    pub fn aggregate(&mut self, key: &str, value: f64) {
        self.aggregates.insert(key.to_string(), value);
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass.unwrap_or(true))
    }

    /// Deterministic body: everything except the metadata block.
    pub fn body_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            experiment: &'a str,
            inequality: &'a str,
            config: &'a ExperimentConfig,
            rows: &'a [Row],
            aggregates: &'a BTreeMap<String, f64>,
        }
        serde_json::to_string_pretty(&Body {
            experiment: &self.experiment,
            inequality: &self.inequality,
            config: &self.config,
            rows: &self.rows,
            aggregates: &self.aggregates,
        })
        .expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV of the rows (one line per row, header first); aggregates are
    /// appended as `aggregate:<key>` rows.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("case,label,value,stderr,method,semantic,tolerance,check,pass,note\n");
        for r in &self.rows {
            let tol = r.tolerance.map(|t| t.to_string()).unwrap_or_default();
            let check = r
                .check
                .map(|c| match c {
                    CheckKind::ValueLeTol => "value<=tol".to_string(),
                    CheckKind::ValueGeTol => "value>=tol".to_string(),
                })
                .unwrap_or_default();
            let pass = r.pass.map(|p| p.to_string()).unwrap_or_default();
            let note = r.note.clone().unwrap_or_default().replace(',', ";");
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.case, r.label, r.value, r.stderr, r.method, r.semantic, tol, check, pass, note
            ));
        }
        for (k, v) in &self.aggregates {
            out.push_str(&format!(",aggregate:{k},{v},,,,,,,\n"));
        }
        out
    }

    /// Write to `<dir>/<experiment>.<ext>`; returns the path.
    pub fn write(&self, dir: &Path, format: ReportFormat) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let (ext, text) = match format {
            ReportFormat::Json => ("json", self.to_json()),
            ReportFormat::Csv => ("csv", self.to_csv()),
        };
        let path = dir.join(format!("{}.{ext}", self.experiment));
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
