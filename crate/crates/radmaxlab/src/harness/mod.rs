//! Experiment orchestration: reproducible configurations, self-describing
//! reports with per-row pass/fail, and the end-to-end studies (Kato ratios,
//! RMF norms, the ℓ¹ counterexample, Carleson and paraproduct constants,
//! unperturbed comparisons, quadratic estimates, R-bound surveys, and the
//! exact-identity selftest).

mod config;
mod experiments;
mod report;
mod selftest;

pub use config::{ExperimentConfig, ReportFormat};
pub use experiments::{
    run, run_carleson, run_counterexample, run_kato, run_paraproduct, run_quadratic, run_rbound,
    run_rmf, run_unperturbed,
};
pub use report::{CheckKind, Metadata, Report, Row};
pub use selftest::run_selftest;
