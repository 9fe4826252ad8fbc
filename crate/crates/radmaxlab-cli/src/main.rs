//! Command-line driver: one subcommand per experiment, flags overriding the
//! optional TOML config. Exit codes: 0 success, 1 experiment failure (with a
//! partial report when possible), 2 usage or configuration errors.

use clap::{Args, Parser, Subcommand};
use radmaxlab::harness::{run, ExperimentConfig, Report, ReportFormat};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "radmaxlab",
    about = "Desk-scale experiments in vector-valued dyadic harmonic analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed (identical seed and config reproduce identical report bodies).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Grid depth J (finest cells have side 2^-J).
    #[arg(long)]
    grid: Option<u32>,
    /// Spatial dimension (1 or 2).
    #[arg(long)]
    n: Option<usize>,
    /// Coordinate space, e.g. "lq:1.5:8", "hilbert:4", "schatten:2:3".
    #[arg(long)]
    space: Option<String>,
    /// Comma-separated exponent list, e.g. "1.5,2,3".
    #[arg(long)]
    p: Option<String>,
    /// Ensemble size.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Cap on rayon worker threads (also via RADMAXLAB_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Square-root ratios for rough elliptic coefficients and the four
    /// resolvent families.
    Kato(CommonArgs),
    /// Rademacher maximal function operator-norm ratios and dominations.
    Rmf(CommonArgs),
    /// The ℓ¹ counterexample table.
    Counterexample {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest index m (capped at 4).
        #[arg(long)]
        m: Option<u32>,
    },
    /// Carleson embedding constants.
    Carleson(CommonArgs),
    /// Paraproduct bound constants.
    Paraproduct(CommonArgs),
    /// Unperturbed comparisons (averaging vs smoothing) and the discrete
    /// Poincaré inequality.
    Unperturbed(CommonArgs),
    /// Randomized quadratic estimates, high-frequency bound, and principal
    /// parts for perturbed operators.
    Quadratic(CommonArgs),
    /// R-bound survey of canonical operator families.
    Rbound(CommonArgs),
    /// Exact-identity suite; exits nonzero on any failure.
    Selftest(CommonArgs),
}

fn build_config(name: &str, common: &CommonArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_toml_file(path).map_err(|e| e.to_string())?,
        None => ExperimentConfig::new(name),
    };
    cfg.experiment = name.to_string();
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.display().to_string());
    }
    if let Some(fmt) = &common.format {
        cfg.format = fmt.parse::<ReportFormat>().map_err(|e| e.to_string())?;
    }
    if let Some(j) = common.grid {
        cfg.grid_j = j;
    }
    if let Some(n) = common.n {
        cfg.n = n;
    }
    if let Some(space) = &common.space {
        cfg.space = space.clone();
    }
    if let Some(plist) = &common.p {
        let mut ps = Vec::new();
        for part in plist.split(',') {
            ps.push(
                part.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad exponent '{part}' in --p"))?,
            );
        }
        cfg.p = ps;
    }
    if let Some(e) = common.ensemble {
        cfg.ensemble = e;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn emit(report: &Report, cfg: &ExperimentConfig) -> Result<(), String> {
    match &cfg.out_dir {
        Some(dir) => {
            let path = report
                .write(std::path::Path::new(dir), cfg.format)
                .map_err(|e| e.to_string())?;
            eprintln!("report written to {}", path.display());
        }
        None => match cfg.format {
            ReportFormat::Json => println!("{}", report.to_json()),
            ReportFormat::Csv => print!("{}", report.to_csv()),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, m_override) = match &cli.command {
        Command::Kato(c) => ("kato", c.clone(), None),
        Command::Rmf(c) => ("rmf", c.clone(), None),
        Command::Counterexample { common, m } => ("counterexample", common.clone(), *m),
        Command::Carleson(c) => ("carleson", c.clone(), None),
        Command::Paraproduct(c) => ("paraproduct", c.clone(), None),
        Command::Unperturbed(c) => ("unperturbed", c.clone(), None),
        Command::Quadratic(c) => ("quadratic", c.clone(), None),
        Command::Rbound(c) => ("rbound", c.clone(), None),
        Command::Selftest(c) => ("selftest", c.clone(), None),
    };
    let threads = common.threads.or_else(|| {
        std::env::var("RADMAXLAB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        radmaxlab::par::configure_threads(t);
    }
    let mut cfg = match build_config(name, &common) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Some(m) = m_override {
        cfg.m_max = m;
    }
    match run(&cfg) {
        Ok(report) => {
            if let Err(msg) = emit(&report, &cfg) {
                eprintln!("error: {msg}");
                return ExitCode::from(1);
            }
            if name == "selftest" && !report.all_pass() {
                eprintln!("selftest: failures present");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("experiment failed: {e}");
            ExitCode::from(1)
        }
    }
}
