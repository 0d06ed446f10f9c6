//! `ebin`: distances, geodesics, means and verification suites for the
//! completed L2 metric over SPD matrices and metric fields.
//!
//! Inputs are file paths (`.json`, or `.csv` for fields) or inline JSON.
//! Exit codes: 0 success, 1 verification failure, 2 input error,
//! 3 convergence failure.

mod commands;
mod input;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ebin_core::harness::{SamplerConfig, SuiteKind, SuiteOptions};
use ebin_core::oracle::MetricKind;
use thiserror::Error;

use commands::SuiteArgs;
use output::{render, Format, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Convergence(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::Convergence(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ebin", version, about = "Geometry of the completed L2 metric on SPD matrices and metric fields")]
struct Cli {
    /// Matrix dimension; inputs of another dimension are rejected.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Seed of the randomized suites.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Overrides the default tolerance of the command.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    output: Format,
    /// Reject field documents whose weights do not sum to one instead of rescaling them.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    CnCone,
    CnField,
    MetricAxioms,
    GeodesicConsistency,
    Completeness,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Affine,
    Ebin,
    Both,
}

#[derive(Debug, clap::Args)]
struct SamplerFlags {
    /// Lower end of the sampled log-determinant range.
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    log_det_min: f64,
    /// Upper end of the sampled log-determinant range.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    log_det_max: f64,
    /// Half-width of the spread of centered log-eigenvalues.
    #[arg(long, default_value_t = 1.0)]
    anisotropy: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distance between two points or two fields.
    Dist {
        #[arg(num_args = 2, required = true)]
        inputs: Vec<String>,
    },
    /// Samples of the geodesic between two points or fields, with cumulative lengths.
    Geodesic {
        #[arg(num_args = 2, required = true)]
        inputs: Vec<String>,
        #[arg(long, default_value_t = 8)]
        steps: usize,
    },
    /// Midpoint of the geodesic between two points or fields.
    Midpoint {
        #[arg(num_args = 2, required = true)]
        inputs: Vec<String>,
    },
    /// Weighted Frechet mean of points or fields.
    Mean {
        #[arg(required = true)]
        inputs: Vec<String>,
        /// Comma-separated non-negative weights, normalized to sum to one (default: uniform).
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
    },
    /// Randomized CAT(0) and metric property suites.
    #[command(name = "cat0-check")]
    Cat0Check {
        #[arg(long, value_enum, default_value_t = SuiteArg::CnCone)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        /// Atoms of the random sample space of the field suite.
        #[arg(long, default_value_t = 16)]
        atoms: usize,
        #[arg(long, default_value_t = 0.1)]
        apex_probability: f64,
        /// Draw log-eigenvalues uniformly instead of from a clipped Cauchy law.
        #[arg(long)]
        no_heavy_tail: bool,
        #[command(flatten)]
        sampler: SamplerFlags,
    },
    /// Compares closed-form distances with the variational curve oracle.
    #[command(name = "oracle-check")]
    OracleCheck {
        #[arg(long, default_value_t = 20)]
        pairs: u64,
        /// Segments of the discrete paths.
        #[arg(long, default_value_t = 128)]
        nodes: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Both)]
        metric: MetricArg,
        #[command(flatten)]
        sampler: SamplerFlags,
    },
    /// Parses and checks inputs, reporting every problem found.
    Validate {
        #[arg(required = true)]
        inputs: Vec<String>,
    },
    /// Version, constants and conventions.
    Info,
}

fn sampler(
    cli: &Cli,
    flags: &SamplerFlags,
    apex_probability: f64,
    heavy_tail: bool,
) -> Result<SamplerConfig, CliError> {
    let cfg = SamplerConfig {
        n: cli.n.unwrap_or(2),
        log_det_range: (flags.log_det_min, flags.log_det_max),
        anisotropy: flags.anisotropy,
        apex_probability,
        seed: cli.seed,
        heavy_tail,
    };
    cfg.validate().map_err(CliError::Input)?;
    Ok(cfg)
}

/// Runs the command, returning its report and exit code.
fn run(cli: &Cli) -> Result<(Report, u8), CliError> {
    let load = |inputs: &[String]| input::load_all(inputs, cli.strict, cli.n);
    let positive = |t: Option<f64>| match t {
        Some(t) if !(t > 0.0 && t.is_finite()) => {
            Err(CliError::Input(format!("--tolerance must be positive, got {t}")))
        }
        _ => Ok(t),
    };
    let tolerance = positive(cli.tolerance)?;
    match &cli.command {
        Command::Dist { inputs } => Ok((commands::dist(load(inputs)?)?, 0)),
        Command::Geodesic { inputs, steps } => Ok((commands::geodesic(load(inputs)?, *steps)?, 0)),
        Command::Midpoint { inputs } => Ok((commands::midpoint_cmd(load(inputs)?)?, 0)),
        Command::Mean { inputs, weights } => {
            let (report, ok) = commands::mean(load(inputs)?, weights, tolerance)?;
            if !ok {
                eprintln!("error: mean residual above threshold");
            }
            Ok((report, if ok { 0 } else { 3 }))
        }
        Command::Cat0Check { suite, samples, atoms, apex_probability, no_heavy_tail, sampler: flags } => {
            if *samples == 0 || *atoms == 0 {
                return Err(CliError::Input("--samples and --atoms must be at least 1".into()));
            }
            let cfg = sampler(cli, flags, *apex_probability, !no_heavy_tail)?;
            let opts = SuiteOptions { tolerance, field_atoms: *atoms, ..Default::default() };
            let kind = match suite {
                SuiteArg::CnCone => Some(SuiteKind::CnCone),
                SuiteArg::CnField => Some(SuiteKind::CnField),
                SuiteArg::MetricAxioms => Some(SuiteKind::MetricAxioms),
                SuiteArg::GeodesicConsistency => Some(SuiteKind::GeodesicConsistency),
                SuiteArg::Completeness => Some(SuiteKind::Completeness),
                SuiteArg::All => None,
            };
            Ok(verdict(commands::cat0_check(kind, &SuiteArgs { cfg, samples: *samples, opts })))
        }
        Command::OracleCheck { pairs, nodes, metric, sampler: flags } => {
            if *pairs == 0 || *nodes < 2 {
                return Err(CliError::Input("--pairs must be at least 1 and --nodes at least 2".into()));
            }
            let cfg = sampler(cli, flags, 0.0, false)?;
            let opts = SuiteOptions { tolerance, oracle_segments: *nodes, ..Default::default() };
            let kind = match metric {
                MetricArg::Affine => Some(MetricKind::Affine),
                MetricArg::Ebin => Some(MetricKind::Ebin),
                MetricArg::Both => None,
            };
            Ok(verdict(commands::oracle_check(kind, &SuiteArgs { cfg, samples: *pairs, opts })))
        }
        Command::Validate { inputs } => {
            let (report, ok) = commands::validate(inputs, cli.strict, cli.n);
            if !ok {
                eprintln!("error: some inputs are invalid");
            }
            Ok((report, if ok { 0 } else { 2 }))
        }
        Command::Info => Ok((commands::info(cli.n.unwrap_or(2)), 0)),
    }
}

fn verdict((report, passed): (Report, bool)) -> (Report, u8) {
    (report, if passed { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((report, code)) => {
            print!("{}", render(&report, cli.output));
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
