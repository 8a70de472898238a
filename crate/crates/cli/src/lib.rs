//! `rfpls` command-line tool: fit, predict, cross-validate and simulate
//! scalar-on-function regression models from CSV curve tables.

pub mod commands;
pub mod error;
pub mod io;
pub mod model;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rfpls_core::Method;

use crate::commands::{cmd_cv, cmd_fit, cmd_generate, cmd_predict, cmd_simulate, CvSettings, FitRequest};
pub use crate::error::{CliError, CliResult, Kind};

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: rfpls_core::Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "rfpls", version, about = "Robust functional partial least squares regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it as JSON.
    Fit(FitArgs),
    /// Predict responses for new curves with a saved model.
    Predict(PredictArgs),
    /// Cross-validate the number of components.
    Cv(CvArgs),
    /// Run the Monte Carlo experiment described by a TOML config.
    Simulate(SimulateArgs),
    /// Export a simulated (optionally contaminated) sample as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Comma-separated curve CSV files, one per functional predictor.
    #[arg(long, value_delimiter = ',', required = true)]
    pub curves: Vec<PathBuf>,
    /// Response CSV with header `id,y`.
    #[arg(long)]
    pub response: PathBuf,
    /// B-spline basis functions per predictor.
    #[arg(long, default_value_t = 20)]
    pub num_basis: usize,
}

#[derive(Debug, Args)]
pub struct CvFlags {
    /// Largest number of components tried.
    #[arg(long, default_value_t = 10)]
    pub max_components: usize,
    #[arg(long, alias = "cv-folds", default_value_t = 5)]
    pub folds: usize,
    /// Fraction of the largest squared errors discarded.
    #[arg(long, default_value_t = 0.1)]
    pub trim_alpha: f64,
    /// Seed of the fold assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl CvFlags {
    fn settings(&self) -> CvSettings {
        CvSettings {
            max_components: self.max_components,
            folds: self.folds,
            trim_alpha: self.trim_alpha,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_parser = parse_method, default_value = "rfpls")]
    pub method: Method,
    #[command(flatten)]
    pub data: DataArgs,
    /// Fixed number of components (skips cross-validation).
    #[arg(long)]
    pub components: Option<usize>,
    #[command(flatten)]
    pub cv: CvFlags,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Report file; printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub curves: Vec<PathBuf>,
    /// Predictions CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, value_parser = parse_method, default_value = "rfpls")]
    pub method: Method,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cv: CvFlags,
    /// Score grid CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Results CSV; overrides `output_path` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Median RISEE summary; defaults to `<out>_summary.csv`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Worker threads; overrides `workers` in the config.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Fraction of contaminated samples.
    #[arg(long, default_value_t = 0.0)]
    pub level: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Variance of the response error on contaminated samples.
    #[arg(long)]
    pub noise_variance: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(
            &FitRequest {
                method: a.method,
                curves: &a.data.curves,
                response: &a.data.response,
                num_basis: a.data.num_basis,
                components: a.components,
                cv: a.cv.settings(),
                out: &a.out,
                report: a.report.as_deref(),
            },
            out,
        ),
        Command::Predict(a) => cmd_predict(&a.model, &a.curves, a.out.as_deref(), out),
        Command::Cv(a) => cmd_cv(
            a.method,
            &a.data.curves,
            &a.data.response,
            a.data.num_basis,
            &a.cv.settings(),
            a.out.as_deref(),
            out,
        )
        .map(|_| ()),
        Command::Simulate(a) => cmd_simulate(&a.config, a.out.as_deref(), a.summary.as_deref(), a.workers, out),
        Command::Generate(a) => cmd_generate(a.n, a.level, a.seed, a.noise_variance, &a.out_dir, out),
    }
}

/// Parses `args` (program name first) and runs the command. Help and version
/// requests are written to `out` and succeed.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return Ok(());
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::config(first.trim_start_matches("error: ").to_string()));
        }
    };
    execute(&cli, out)
}
