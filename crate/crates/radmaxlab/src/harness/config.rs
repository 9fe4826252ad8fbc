//! Flat experiment configuration, loadable from TOML with CLI overrides.
//! Identical configuration plus seed reproduces identical report bodies.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!(
                "unknown format '{other}' (csv or json)"
            ))),
        }
    }
}

fn default_space() -> String {
    "hilbert:1".to_string()
}
fn default_n() -> usize {
    1
}
fn default_j() -> u32 {
    5
}
fn default_p() -> Vec<f64> {
    vec![2.0]
}
fn default_epsilon() -> f64 {
    0.5
}
fn default_ensemble() -> usize {
    10
}
fn default_lambda() -> f64 {
    1.0
}
fn default_big_lambda() -> f64 {
    10.0
}
fn default_m_max() -> u32 {
    3
}
fn default_restarts() -> usize {
    2
}
fn default_sweeps() -> usize {
    4
}
fn default_perturbations() -> usize {
    8
}
fn default_budget() -> u64 {
    4000
}
fn default_nodes_per_decade() -> usize {
    40
}
fn default_format() -> ReportFormat {
    ReportFormat::Json
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default = "default_space")]
    pub space: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_j")]
    pub grid_j: u32,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default)]
    pub seed: u64,
    /// Ellipticity band [λ, Λ] for coefficient ensembles.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_big_lambda")]
    pub big_lambda: f64,
    /// Largest counterexample index m.
    #[serde(default = "default_m_max")]
    pub m_max: u32,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_perturbations")]
    pub perturbations: usize,
    /// Monte Carlo budget for randomized norms beyond the enumeration
    /// threshold.
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default = "default_nodes_per_decade")]
    pub nodes_per_decade: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default = "default_format")]
    pub format: ReportFormat,
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> ExperimentConfig {
        toml::from_str(&format!("experiment = \"{experiment}\"")).expect("defaults are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config parse error: {e}")))
    }

    pub fn from_toml_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn space_descriptor(&self) -> Result<crate::space::SpaceDescriptor> {
        crate::space::SpaceDescriptor::parse(&self.space)
    }

    pub fn source(&self) -> crate::rng::RandomSource {
        crate::rng::RandomSource::new(self.seed)
    }

    pub fn mr_opts(&self) -> crate::radmax::MrOpts {
        crate::radmax::MrOpts {
            restarts: self.restarts,
            sweeps: self.sweeps,
            perturbations: self.perturbations,
            ..Default::default()
        }
    }

    pub fn randomized_opts(&self) -> crate::space::RandomizedOpts {
        crate::space::RandomizedOpts::default().with_budget(self.budget)
    }

    pub fn validate(&self) -> Result<()> {
        self.space_descriptor()?;
        if self.n != 1 && self.n != 2 {
            return Err(Error::invalid("n must be 1 or 2"));
        }
        for &p in &self.p {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(Error::invalid(format!("exponent {p} must be ≥ 1")));
            }
        }
        if !(self.lambda > 0.0 && self.big_lambda >= self.lambda) {
            return Err(Error::invalid("need 0 < lambda <= big_lambda"));
        }
        Ok(())
    }
}
