use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use longmem_core::hurst::{DEFAULT_BIN_WIDTH, DEFAULT_FIT_MAX, DEFAULT_MIN_IMPROVEMENT};
use longmem_core::network::{DEFAULT_RESOLUTION, DEFAULT_THRESHOLD};
use longmem_core::series::AlignPolicy;
use longmem_core::DetrendMethod;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 20070104;

/// Long-range correlation analysis of dated rate panels.
#[derive(Debug, Parser)]
#[command(name = "longmem", version, about, max_term_width = 100)]
pub struct Cli {
    /// Worker threads for the numeric kernels [default: all cores]
    #[arg(long, global = true, env = "LONGMEM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hurst exponent per series, histogram and crossover scan
    Hurst(HurstArgs),
    /// rho_DCCA curves for chosen pairs or full matrices at fixed scales
    Dcca(DccaArgs),
    /// Thresholded rho_DCCA networks, communities and degree curves
    Network(NetworkArgs),
    /// Write a synthetic panel
    Synth(SynthArgs),
    /// Hurst, DCCA matrices and networks on one panel
    Report(ReportArgs),
    /// Re-run the command recorded in a manifest.json
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Graphml,
    Dot,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Panel CSV: `date` column (YYYY-MM-DD) then one numeric column per series
    #[arg(long, short)]
    pub input: PathBuf,

    /// Field delimiter of the input
    #[arg(long, default_value = ",")]
    pub delimiter: char,

    /// `intersect` or `ffill:N` (carry values across gaps of up to N rows)
    #[arg(long, default_value = "intersect", value_parser = parse_align)]
    pub align: AlignPolicy,

    /// dfa, dfaN, dma-centered or dma-backward
    #[arg(long, short, default_value = "dma-centered")]
    pub method: DetrendMethod,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory, created if missing
    #[arg(long, short)]
    pub out: PathBuf,

    /// Output formats
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json, Format::Graphml, Format::Dot])]
    pub format: Vec<Format>,

    /// Seed for every randomised step
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Exit with status 3 when some series could not be analysed
    #[arg(long)]
    pub strict: bool,
}

/// Log-spaced scale grid, or an explicit list.
#[derive(Debug, Args, Default)]
pub struct GridArgs {
    /// Smallest scale of the generated grid
    #[arg(long)]
    pub min_scale: Option<usize>,
    /// Largest scale of the generated grid (capped by the series length)
    #[arg(long)]
    pub max_scale: Option<usize>,
    /// Number of log-spaced scales
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Explicit comma-separated grid, overrides the three options above
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["min_scale", "max_scale", "grid_points"])]
    pub grid: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct HurstOptions {
    /// Lower end of the fitted scale range
    #[arg(long, default_value_t = 0)]
    pub fit_min: usize,
    /// Upper end of the fitted scale range
    #[arg(long, default_value_t = DEFAULT_FIT_MAX)]
    pub fit_max: usize,
    /// Histogram bin width
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,
    /// Minimum relative SSE reduction for reporting a crossover
    #[arg(long, default_value_t = DEFAULT_MIN_IMPROVEMENT)]
    pub crossover_threshold: f64,
}

#[derive(Debug, Args)]
pub struct NetworkOptions {
    /// Scales of the network snapshots
    #[arg(long = "scale", value_delimiter = ',', default_values_t = [50, 150, 250])]
    pub scales: Vec<usize>,
    /// Minimum |rho| for an edge
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Modularity resolution
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: f64,
    /// Inclusive window FROM:TO (YYYY-MM-DD), repeatable
    #[arg(long = "period", value_parser = parse_period)]
    pub periods: Vec<(NaiveDate, NaiveDate)>,
}

#[derive(Debug, Args)]
pub struct HurstArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub hurst: HurstOptions,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DccaArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Pair of series ids `A,B` for a rho-vs-scale curve, repeatable
    #[arg(long = "pair", value_parser = parse_pair)]
    pub pairs: Vec<(String, String)>,
    /// Full matrix at every `--scale`
    #[arg(long)]
    pub all: bool,
    /// Matrix scales
    #[arg(long = "scale", value_delimiter = ',', default_values_t = [50, 150, 250])]
    pub scales: Vec<usize>,
    /// Curve grid [default: 30 log-spaced scales from 5 to 500]
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub network: NetworkOptions,
    /// Grid of the average-weighted-degree curve
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub hurst: HurstOptions,
    #[command(flatten)]
    pub network: NetworkOptions,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Debug, Subcommand)]
pub enum SynthKind {
    /// Independent fractional Gaussian noise members
    Fgn(FgnArgs),
    /// Blocks of members sharing a common noise component
    Blocks(BlocksArgs),
}

#[derive(Debug, Args)]
pub struct FgnArgs {
    #[arg(long, default_value_t = 0.7)]
    pub hurst: f64,
    /// Noise length per member
    #[arg(long, default_value_t = 8192)]
    pub n: usize,
    /// Number of members
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BlocksArgs {
    /// Layout `BLOCKSxMEMBERS`
    #[arg(long, default_value = "3x5", value_parser = parse_layout)]
    pub blocks: (usize, usize),
    /// Weight of the block-common component
    #[arg(long, default_value_t = 0.9)]
    pub weight: f64,
    #[arg(long, default_value_t = 0.8)]
    pub hurst: f64,
    #[arg(long, default_value_t = 8192)]
    pub n: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    pub manifest: PathBuf,
    /// Output directory [default: the manifest's directory]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn parse_align(s: &str) -> Result<AlignPolicy, String> {
    let s = s.trim();
    if s == "intersect" {
        return Ok(AlignPolicy::Intersect);
    }
    let gap = s
        .strip_prefix("ffill:")
        .ok_or_else(|| format!("expected `intersect` or `ffill:N`, got `{s}`"))?;
    let max_gap = gap
        .parse()
        .map_err(|_| format!("invalid gap length `{gap}`"))?;
    Ok(AlignPolicy::ForwardFill { max_gap })
}

pub fn parse_period(s: &str) -> Result<(NaiveDate, NaiveDate), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected FROM:TO, got `{s}`"))?;
    let date = |d: &str| {
        NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{d}`: {e}"))
    };
    let (from, to) = (date(a)?, date(b)?);
    if from > to {
        return Err(format!("period {from}:{to} ends before it starts"));
    }
    Ok((from, to))
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
            Ok((a.trim().to_string(), b.trim().to_string()))
        }
        _ => Err(format!("expected A,B, got `{s}`")),
    }
}

fn parse_layout(s: &str) -> Result<(usize, usize), String> {
    let err = || format!("expected BLOCKSxMEMBERS, got `{s}`");
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(err)?;
    Ok((
        a.trim().parse().map_err(|_| err())?,
        b.trim().parse().map_err(|_| err())?,
    ))
}
