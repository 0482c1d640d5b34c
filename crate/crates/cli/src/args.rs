use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "hypcyl", version, about = "Poisson cylinder processes in hyperbolic space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Comma-separated coordinates, e.g. `0.5,0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coords(pub Vec<f64>);

impl FromStr for Coords {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad coordinate `{t}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Coords)
    }
}

impl fmt::Display for Coords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

fn dimension(s: &str) -> Result<usize, String> {
    let d: usize = s.parse().map_err(|e| format!("{e}"))?;
    if d < 2 {
        return Err("dimension must be at least 2".into());
    }
    Ok(d)
}

fn replications(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n < 2 {
        return Err("need at least 2".into());
    }
    Ok(n)
}

fn nonneg(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err("must be a finite number >= 0".into());
    }
    Ok(v)
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Distance between two points given in Poincaré ball coordinates.
    GeoDist(GeoDist),
    /// Measure of the lines meeting a ball of radius r.
    LineMeasure(LineMeasure),
    /// A Poisson line process in a window.
    LineSample(LineSample),
    /// Probability that two balls are joined by one cylinder.
    ConnectOne(ConnectOne),
    /// Windowed probability of a chain of at most m cylinders.
    ConnectM(ConnectM),
    /// Component statistics across a grid of intensities.
    PhaseScan(PhaseScan),
    /// Closed-form expected generation sizes of the particle process.
    BranchingTable(BranchingTable),
    /// Simulated generation sizes of the particle process.
    BranchingSim(BranchingSim),
    /// Domination constant of an offspring kernel against the canonical one.
    KernelCheck(KernelCheck),
    /// Shell masses of the lines near a fixed line at distance x.
    TauBins(TauBins),
    /// Generation counts of the independent cylinder process.
    EtaSim(EtaSim),
    /// Growth rate of cumulative cylinder-process counts against the ambient rate.
    GrowthCompare(GrowthCompare),
    /// A separated net of a ball.
    NetBuild(NetBuild),
    /// Runs the acceptance suite.
    Acceptance(Acceptance),
    /// Re-runs the experiment recorded in an output file.
    #[serde(skip)]
    Replay(Replay),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GeoDist {
    /// A point, given twice.
    #[arg(long = "ball", num_args = 1, required = true)]
    pub ball: Vec<Coords>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LineMeasure {
    #[arg(long, value_parser = dimension)]
    pub d: usize,
    #[arg(long, value_parser = nonneg)]
    pub r: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LineSample {
    #[arg(long, value_parser = dimension)]
    pub d: usize,
    #[arg(long, value_parser = nonneg)]
    pub u: f64,
    /// Window radius.
    #[arg(long, value_parser = nonneg)]
    pub r: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConnectOne {
    #[arg(long, value_parser = dimension)]
    pub d: usize,
    #[arg(long, value_parser = nonneg)]
    pub u: f64,
    /// Distance between the two ball centers.
    #[arg(long = "R", value_parser = nonneg)]
    pub r: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConnectM {
    #[arg(long, value_parser = dimension)]
    pub d: usize,
    #[arg(long, value_parser = nonneg)]
    pub u: f64,
    #[arg(long = "R", value_parser = nonneg)]
    pub r: f64,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 2.0, value_parser = nonneg)]
    pub margin: f64,
    #[arg(long, default_value_t = 10_000, value_parser = replications)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PhaseScan {
    #[arg(long, value_parser = dimension)]
    pub d: usize,
    #[arg(long = "window-r", value_parser = nonneg)]
    pub window_r: f64,
    #[arg(long = "u-grid", value_delimiter = ',', required = true)]
    pub u_grid: Vec<f64>,
    #[arg(long, default_value_t = 100, value_parser = replications)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BranchingTable {
    #[arg(long, value_parser = nonneg)]
    pub u: f64,
    #[arg(long = "R", value_parser = nonneg)]
    pub r: f64,
    #[arg(long = "n-max", default_value_t = 10)]
    pub n_max: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BranchingSim {
    #[arg(long, value_parser = nonneg)]
    pub u: f64,
    #[arg(long = "R", value_parser = nonneg)]
    pub r: f64,
    #[arg(long, default_value_t = 4)]
    pub gens: usize,
    /// Type cap; defaults to R + 40.
    #[arg(long, value_parser = nonneg)]
    pub cap: Option<f64>,
    #[arg(long, default_value_t = 100_000, value_parser = replications)]
    pub reps: usize,
    #[arg(long = "pop-cap", default_value_t = 10_000_000)]
    pub pop_cap: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Mu,
    Tau,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KernelCheck {
    #[arg(long, value_enum)]
    pub kernel: KernelName,
    #[arg(long, value_parser = nonneg)]
    pub u: f64,
    /// Multiplies the kernel.
    #[arg(long, default_value_t = 1.0, value_parser = nonneg)]
    pub factor: f64,
    #[arg(long = "k-bins", default_value_t = 10)]
    pub k_bins: usize,
    #[arg(long = "l-cells", default_value_t = 10)]
    pub l_cells: usize,
    /// Cell width in x; the tau kernel is tabulated on unit cells only.
    #[arg(long = "cell-width", default_value_t = 1.0)]
    pub cell_width: f64,
    #[arg(long, default_value_t = 2, value_parser = dimension)]
    pub d: usize,
    /// Samples per tabulated x for the tau kernel.
    #[arg(long = "n-per-point", default_value_t = 10_000)]
    pub n_per_point: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TauBins {
    #[arg(long, value_parser = dimension)]
    pub d: usize,
    #[arg(long, value_parser = nonneg)]
    pub u: f64,
    #[arg(long, value_parser = nonneg)]
    pub x: f64,
    #[arg(long = "l-max", default_value_t = 7)]
    pub l_max: usize,
    #[arg(long, default_value_t = 1_000_000, value_parser = replications)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EtaSim {
    #[arg(long, value_parser = dimension)]
    pub d: usize,
    #[arg(long, value_parser = nonneg)]
    pub u: f64,
    #[arg(long = "R", value_parser = nonneg)]
    pub r: f64,
    #[arg(long, default_value_t = 3)]
    pub gens: usize,
    /// Window radius; defaults to R.
    #[arg(long = "window-r", value_parser = nonneg)]
    pub window_r: Option<f64>,
    #[arg(long, default_value_t = 10_000, value_parser = replications)]
    pub reps: usize,
    #[arg(long = "line-cap", default_value_t = 1_000_000)]
    pub line_cap: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GrowthCompare {
    #[arg(long, value_parser = dimension)]
    pub d: usize,
    #[arg(long, value_parser = nonneg)]
    pub u: f64,
    #[arg(long = "r-grid", value_delimiter = ',', required = true)]
    pub r_grid: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub gens: usize,
    #[arg(long, default_value_t = 2000, value_parser = replications)]
    pub reps: usize,
    #[arg(long = "window-margin", default_value_t = 2.0, value_parser = nonneg)]
    pub window_margin: f64,
    #[arg(long, default_value_t = 0.0, value_parser = nonneg)]
    pub margin: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NetBuild {
    #[arg(long, value_parser = dimension)]
    pub d: usize,
    #[arg(long, value_parser = nonneg)]
    pub r: f64,
    #[arg(long, default_value_t = 1.0, value_parser = nonneg)]
    pub spacing: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Acceptance {
    /// Multiplies every sample count; the runtime budgets apply at 1 only.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Run only these criteria.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<usize>,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct Replay {
    /// An output file written by any other subcommand.
    pub file: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GeoDist(_) => "geo-dist",
            Self::LineMeasure(_) => "line-measure",
            Self::LineSample(_) => "line-sample",
            Self::ConnectOne(_) => "connect-one",
            Self::ConnectM(_) => "connect-m",
            Self::PhaseScan(_) => "phase-scan",
            Self::BranchingTable(_) => "branching-table",
            Self::BranchingSim(_) => "branching-sim",
            Self::KernelCheck(_) => "kernel-check",
            Self::TauBins(_) => "tau-bins",
            Self::EtaSim(_) => "eta-sim",
            Self::GrowthCompare(_) => "growth-compare",
            Self::NetBuild(_) => "net-build",
            Self::Acceptance(_) => "acceptance",
            Self::Replay(_) => "replay",
        }
    }
}
