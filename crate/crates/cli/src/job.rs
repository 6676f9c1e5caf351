//! Resolved run configurations. A [`Manifest`] holds everything needed to
//! repeat a run, so replaying it reproduces the outputs byte for byte.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use chrono::NaiveDate;
use longmem_core::hurst::CrossoverConfig;
use longmem_core::network::validate_threshold;
use longmem_core::scaling::{DEFAULT_GRID_POINTS, DEFAULT_MAX_SCALE, DEFAULT_MIN_SCALE};
use longmem_core::series::{align, load_panel_detailed, AlignPolicy, IngestConfig};
use longmem_core::{DetrendMethod, RatePanel, ScaleGrid};
use serde::{Deserialize, Serialize};

use crate::args::{self, Format, GridArgs, HurstOptions, InputArgs, NetworkOptions, OutputArgs};
use crate::error::{CliError, ResultExt};

pub const TOOL: &str = "longmem";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub job: Job,
}

impl Manifest {
    pub fn new(seed: u64, job: Job) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            seed,
            job,
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))
            .invalid()?;
        let m: Manifest = serde_json::from_str(&text)
            .with_context(|| format!("malformed manifest {}", path.display()))
            .invalid()?;
        if m.tool != TOOL {
            return Err(CliError::Invalid(anyhow!(
                "manifest was not written by {TOOL}"
            )));
        }
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s.into_bytes()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Job {
    Hurst(HurstJob),
    Dcca(DccaJob),
    Network(NetworkJob),
    Synth(SynthJob),
    Report(ReportJob),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub formats: Vec<Format>,
    pub strict: bool,
}

impl OutputConfig {
    fn from_args(a: &OutputArgs) -> Self {
        let mut formats = a.format.clone();
        formats.sort_unstable();
        formats.dedup();
        Self {
            formats,
            strict: a.strict,
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputConfig {
    /// Absolute path, resolved when the run was configured.
    pub path: PathBuf,
    pub delimiter: char,
    pub align: AlignPolicy,
    pub method: DetrendMethod,
}

impl InputConfig {
    fn from_args(a: &InputArgs) -> Result<Self, CliError> {
        let path = std::fs::canonicalize(&a.input)
            .with_context(|| format!("input {} not found", a.input.display()))
            .invalid()?;
        if !a.delimiter.is_ascii() {
            return Err(CliError::Invalid(anyhow!(
                "delimiter must be a single ASCII character"
            )));
        }
        Ok(Self {
            path,
            delimiter: a.delimiter,
            align: a.align,
            method: a.method,
        })
    }

    /// Loads and aligns the panel. Rejected rows are reported on stderr.
    pub fn load(&self) -> Result<RatePanel, CliError> {
        let config = IngestConfig {
            delimiter: self.delimiter as u8,
        };
        let loaded = load_panel_detailed(&self.path, &config).invalid()?;
        if !loaded.rejected_rows.is_empty() {
            eprintln!(
                "warning: skipped {} rows with unparseable dates",
                loaded.rejected_rows.len()
            );
        }
        align(&loaded.panel, self.align).invalid()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridConfig {
    /// Log-spaced; `max` is capped at `profile_len / cap_divisor`.
    Generated {
        min: usize,
        max: usize,
        points: usize,
        cap_divisor: usize,
    },
    Explicit {
        scales: Vec<usize>,
    },
}

impl GridConfig {
    fn from_args(
        a: &GridArgs,
        min: usize,
        max: usize,
        points: usize,
        cap_divisor: usize,
    ) -> Result<Self, CliError> {
        if let Some(scales) = &a.grid {
            ScaleGrid::new(scales.clone()).invalid()?;
            return Ok(Self::Explicit {
                scales: scales.clone(),
            });
        }
        let g = Self::Generated {
            min: a.min_scale.unwrap_or(min),
            max: a.max_scale.unwrap_or(max),
            points: a.grid_points.unwrap_or(points),
            cap_divisor,
        };
        if let Self::Generated {
            min, max, points, ..
        } = g
        {
            ScaleGrid::log_spaced(min, max, points).invalid()?;
        }
        Ok(g)
    }

    pub fn resolve(
        &self,
        profile_len: usize,
        method: &DetrendMethod,
    ) -> Result<ScaleGrid, CliError> {
        let grid = match self {
            Self::Explicit { scales } => ScaleGrid::new(scales.clone()).invalid()?,
            Self::Generated {
                min,
                max,
                points,
                cap_divisor,
            } => {
                let top = (*max).min(profile_len / cap_divisor);
                if top < *min {
                    return Err(CliError::Invalid(anyhow!(
                        "series of {profile_len} increments are too short for scales from {min}"
                    )));
                }
                ScaleGrid::log_spaced(*min, top, *points).invalid()?
            }
        };
        grid.check(profile_len, method).invalid()?;
        Ok(grid)
    }
}

/// Fixed snapshot scales, checked against the profile length.
pub fn snapshot_grid(
    scales: &[usize],
    profile_len: usize,
    method: &DetrendMethod,
) -> Result<ScaleGrid, CliError> {
    let mut sorted = scales.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let grid = ScaleGrid::new(sorted).invalid()?;
    grid.check(profile_len, method).invalid()?;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstConfig {
    pub grid: GridConfig,
    pub fit_range: (usize, usize),
    pub bin_width: f64,
    pub crossover: CrossoverConfig,
}

impl HurstConfig {
    fn from_args(grid: &GridArgs, a: &HurstOptions) -> Result<Self, CliError> {
        if a.fit_min >= a.fit_max {
            return Err(CliError::Invalid(anyhow!(
                "fit range {}..{} is empty",
                a.fit_min,
                a.fit_max
            )));
        }
        if !(a.bin_width > 0.0 && a.bin_width.is_finite()) {
            return Err(CliError::Invalid(anyhow!("bin width must be positive")));
        }
        if !(0.0..=1.0).contains(&a.crossover_threshold) {
            return Err(CliError::Invalid(anyhow!(
                "crossover threshold must lie in [0, 1]"
            )));
        }
        Ok(Self {
            grid: GridConfig::from_args(
                grid,
                DEFAULT_MIN_SCALE,
                DEFAULT_MAX_SCALE,
                DEFAULT_GRID_POINTS,
                4,
            )?,
            fit_range: (a.fit_min, a.fit_max),
            bin_width: a.bin_width,
            crossover: CrossoverConfig {
                min_improvement: a.crossover_threshold,
                ..CrossoverConfig::default()
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub scales: Vec<usize>,
    pub threshold: f64,
    pub resolution: f64,
    pub periods: Vec<(NaiveDate, NaiveDate)>,
    /// Grid of the average-weighted-degree curve.
    pub degree_grid: GridConfig,
}

impl NetworkConfig {
    fn from_args(grid: &GridArgs, a: &NetworkOptions) -> Result<Self, CliError> {
        validate_threshold(a.threshold).invalid()?;
        if !(a.resolution > 0.0 && a.resolution.is_finite()) {
            return Err(CliError::Invalid(anyhow!("resolution must be positive")));
        }
        if a.scales.is_empty() {
            return Err(CliError::Invalid(anyhow!("no network scales")));
        }
        Ok(Self {
            scales: a.scales.clone(),
            threshold: a.threshold,
            resolution: a.resolution,
            periods: a.periods.clone(),
            degree_grid: GridConfig::from_args(
                grid,
                DEFAULT_MIN_SCALE,
                DEFAULT_MAX_SCALE,
                DEFAULT_GRID_POINTS,
                4,
            )?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstJob {
    pub input: InputConfig,
    pub hurst: HurstConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccaJob {
    pub input: InputConfig,
    pub pairs: Vec<(String, String)>,
    pub all: bool,
    pub scales: Vec<usize>,
    pub curve_grid: GridConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkJob {
    pub input: InputConfig,
    pub network: NetworkConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJob {
    pub input: InputConfig,
    pub hurst: HurstConfig,
    pub network: NetworkConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SynthJob {
    Fgn {
        hurst: f64,
        n: usize,
        count: usize,
    },
    Blocks {
        n_blocks: usize,
        block_size: usize,
        common_weight: f64,
        hurst: f64,
        n: usize,
    },
}

/// Parsed command line to (manifest, output directory). Everything that can
/// be checked without computing is checked here.
pub fn from_cli(cmd: args::Command) -> Result<(Manifest, PathBuf), CliError> {
    use args::Command as C;
    let (job, out) = match cmd {
        C::Hurst(a) => (
            Job::Hurst(HurstJob {
                input: InputConfig::from_args(&a.input)?,
                hurst: HurstConfig::from_args(&a.grid, &a.hurst)?,
                output: OutputConfig::from_args(&a.output),
            }),
            a.output,
        ),
        C::Dcca(a) => {
            if a.pairs.is_empty() && !a.all {
                return Err(CliError::Invalid(anyhow!(
                    "nothing to do: pass --pair A,B or --all"
                )));
            }
            (
                Job::Dcca(DccaJob {
                    input: InputConfig::from_args(&a.input)?,
                    pairs: a.pairs,
                    all: a.all,
                    scales: a.scales,
                    curve_grid: GridConfig::from_args(&a.grid, 5, 500, 30, 2)?,
                    output: OutputConfig::from_args(&a.output),
                }),
                a.output,
            )
        }
        C::Network(a) => (
            Job::Network(NetworkJob {
                input: InputConfig::from_args(&a.input)?,
                network: NetworkConfig::from_args(&a.grid, &a.network)?,
                output: OutputConfig::from_args(&a.output),
            }),
            a.output,
        ),
        C::Report(a) => (
            Job::Report(ReportJob {
                input: InputConfig::from_args(&a.input)?,
                hurst: HurstConfig::from_args(&a.grid, &a.hurst)?,
                network: NetworkConfig::from_args(&a.grid, &a.network)?,
                output: OutputConfig::from_args(&a.output),
            }),
            a.output,
        ),
        C::Synth(a) => match a.kind {
            args::SynthKind::Fgn(f) => (
                Job::Synth(SynthJob::Fgn {
                    hurst: f.hurst,
                    n: f.n,
                    count: f.count,
                }),
                f.output,
            ),
            args::SynthKind::Blocks(b) => (
                Job::Synth(SynthJob::Blocks {
                    n_blocks: b.blocks.0,
                    block_size: b.blocks.1,
                    common_weight: b.weight,
                    hurst: b.hurst,
                    n: b.n,
                }),
                b.output,
            ),
        },
        C::Replay(_) => return bail_invalid("replay is not a job"),
    };
    let manifest = Manifest::new(out.seed, job);
    manifest.job.validate(manifest.seed)?;
    Ok((manifest, out.out))
}

fn bail_invalid<T>(msg: &str) -> Result<T, CliError> {
    Err(CliError::Invalid(anyhow!("{msg}")))
}

impl Job {
    /// Static checks that do not need the input data.
    pub fn validate(&self, seed: u64) -> Result<(), CliError> {
        match self {
            Job::Synth(SynthJob::Fgn { hurst, n, count }) => {
                if *count == 0 {
                    return bail_invalid("count must be positive");
                }
                longmem_core::synthetic::FgnSpec::new(*n, *hurst, seed)
                    .validate()
                    .invalid()
            }
            Job::Synth(SynthJob::Blocks {
                n_blocks,
                block_size,
                common_weight,
                hurst,
                n,
            }) => longmem_core::synthetic::BlockSpec {
                n_blocks: *n_blocks,
                block_size: *block_size,
                common_weight: *common_weight,
                hurst: *hurst,
                n: *n,
                seed,
            }
            .validate()
            .invalid(),
            Job::Network(NetworkJob { network, .. }) | Job::Report(ReportJob { network, .. }) => {
                validate_threshold(network.threshold).invalid()
            }
            Job::Hurst(_) | Job::Dcca(_) => Ok(()),
        }
    }
}

pub fn check_pairs(panel: &RatePanel, pairs: &[(String, String)]) -> anyhow::Result<()> {
    let ids = panel.ids();
    for (a, b) in pairs {
        for id in [a, b] {
            if !ids.contains(&id.as_str()) {
                bail!("unknown series `{id}`");
            }
        }
    }
    Ok(())
}
