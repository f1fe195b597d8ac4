use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "affdim", version, about = "Minkowski and Hausdorff dimensions of affine multiplicative subshifts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form or series value of one or both dimensions.
    Dim(DimArgs),
    /// Chains of the window {1, …, n}, or their census.
    Decompose(DecomposeArgs),
    /// Exact number of admissible words of length n.
    Count(CountArgs),
    /// Compare exhaustive enumeration with the chain-product count for n = 1..max-n.
    Verify(VerifyArgs),
    /// Draw a word from the product of optimal chain measures.
    Sample(SampleArgs),
    /// Monte Carlo estimate of the local dimension of the optimal measure.
    Billingsley(BillingsleyArgs),
    /// Empirical versus closed-form dimension over a grid of window sizes.
    Sweep(SweepArgs),
    /// Density of positions touched by superlinear higher-order constraints.
    HigherOrder(HigherOrderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Minkowski,
    Hausdorff,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

fn positive_tol(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("tolerance must be positive, got {s}"))
    }
}

/// Accepts integers and scientific notation such as `1e6`.
pub fn window_size(s: &str) -> Result<u64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s}"))?;
    if !(v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= 9.0e15) {
        return Err(format!("window size must be a positive integer, got {s}"));
    }
    Ok(v as u64)
}

#[derive(Debug, Args)]
pub struct SystemArg {
    /// System description: {"m", "matrix", "p", "q", "a", "b"}.
    pub system: PathBuf,
}

#[derive(Debug, Args)]
pub struct DimArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub kind: Kind,
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = positive_tol)]
    pub tol: f64,
    #[command(flatten)]
    pub system: SystemArg,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long, value_parser = window_size)]
    pub n: u64,
    /// Emit the census {L, D} instead of the chains.
    #[arg(long)]
    pub census: bool,
    #[command(flatten)]
    pub system: SystemArg,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[arg(long, value_parser = window_size)]
    pub n: u64,
    #[command(flatten)]
    pub system: SystemArg,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 14, value_parser = window_size)]
    pub max_n: u64,
    #[command(flatten)]
    pub system: SystemArg,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, value_parser = window_size)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON sidecar here instead of as the second output line.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[command(flatten)]
    pub system: SystemArg,
}

#[derive(Debug, Args)]
pub struct BillingsleyArgs {
    #[arg(long, value_parser = window_size)]
    pub n: u64,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = positive_tol)]
    pub tol: f64,
    #[command(flatten)]
    pub system: SystemArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value = "minkowski")]
    pub kind: Kind,
    /// Comma-separated window sizes, e.g. 1e3,1e4,1e5.
    #[arg(long, value_delimiter = ',', value_parser = window_size, required = true)]
    pub n_grid: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = positive_tol)]
    pub tol: f64,
    /// Samples per grid point for the Hausdorff sweep.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(flatten)]
    pub system: SystemArg,
}

#[derive(Debug, Args)]
pub struct HigherOrderArgs {
    /// Growth map such as k^2 or 3*k^1.5; repeat for several positions.
    #[arg(long = "f")]
    pub maps: Vec<String>,
    /// JSON array of forbidden words, each of length (number of maps) + 2.
    #[arg(long)]
    pub forbidden: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = window_size, required = true)]
    pub n_grid: Vec<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(flatten)]
    pub system: SystemArg,
}
