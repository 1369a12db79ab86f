use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use snapmap::embed::{EmbedConfig, WaveletSettings};
use snapmap::kernel::{BandwidthPolicy, RankPolicy};
use snapmap::observables::{ObservableRequest, Region};
use snapmap::physics::{IsingAlgorithm, ToyKind};
use snapmap::pipeline::{DetectConfig, DetectMethod};
use snapmap::wavelet::Levels;

#[derive(Debug, Parser)]
#[command(name = "snapmap", version, about = "Phase-transition detection from snapshot ensembles")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Omit the generation-time comment from SVG output.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample transverse-field Ising ground states.
    GenTfim(GenTfimArgs),
    /// Monte Carlo snapshots of the 2D Ising model.
    GenIsing(GenIsingArgs),
    /// Two-site toy ensembles.
    GenToy(GenToyArgs),
    /// Diffusion-map embedding of a dataset.
    Embed(EmbedCmd),
    /// Embedding followed by transition detection.
    Detect(DetectCmd),
    /// Conventional observables per setting.
    Observables(ObservablesCmd),
    /// Embed, detect and compute observables in one run.
    Pipeline(PipelineCmd),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenTfim(_) => "gen-tfim",
            Command::GenIsing(_) => "gen-ising",
            Command::GenToy(_) => "gen-toy",
            Command::Embed(_) => "embed",
            Command::Detect(_) => "detect",
            Command::Observables(_) => "observables",
            Command::Pipeline(_) => "pipeline",
        }
    }
}

/// `start:stop:step` (inclusive) or a comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range must be start:stop:step, got {s:?}"));
        }
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step.is_nan() || step <= 0.0 || b < a {
            return Err(format!("empty range {s:?}"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize + 1;
        // snap to 12 decimals so 0.1 steps print as 0.3, not 0.30000000000000004
        Ok(Grid((0..n).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect()))
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>().map(Grid)
    }
}

#[derive(Debug, Args)]
pub struct GenTfimArgs {
    /// Chain length.
    #[arg(long = "L", default_value_t = 12)]
    pub length: usize,
    #[arg(long = "lambda", value_parser = parse_grid, default_value = "0.2:2.0:0.1")]
    pub lambdas: Grid,
    #[arg(long, default_value_t = 500)]
    pub shots: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgoArg {
    Metropolis,
    Wolff,
}

impl From<AlgoArg> for IsingAlgorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Metropolis => IsingAlgorithm::Metropolis,
            AlgoArg::Wolff => IsingAlgorithm::Wolff,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenIsingArgs {
    #[arg(long, default_value_t = 16)]
    pub side: usize,
    #[arg(long = "temp", value_parser = parse_grid, default_value = "1.5:3.2:0.1")]
    pub temperatures: Grid,
    #[arg(long, default_value_t = 500)]
    pub shots: usize,
    #[arg(long = "algo", value_enum, default_value = "wolff")]
    pub algorithm: AlgoArg,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    /// Sweeps between stored snapshots.
    #[arg(long, default_value_t = 5)]
    pub decorrelation: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ToyArg {
    Anticorrelated,
    Uniform,
}

impl From<ToyArg> for ToyKind {
    fn from(a: ToyArg) -> Self {
        match a {
            ToyArg::Anticorrelated => ToyKind::Anticorrelated,
            ToyArg::Uniform => ToyKind::Uniform,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    #[arg(long, value_enum, default_value = "anticorrelated")]
    pub kind: ToyArg,
    /// Number of settings (parameters 0, 1, ...).
    #[arg(long, default_value_t = 5)]
    pub settings: usize,
    #[arg(long, default_value_t = 500)]
    pub shots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum, default_value = "on")]
    pub wavelet: Switch,
    /// Level-weight exponent (default 1 + spatial_dim/2).
    #[arg(long)]
    pub wavelet_exponent: Option<f64>,
    /// Decomposition depth, an integer or "full".
    #[arg(long, default_value = "full", value_parser = parse_levels)]
    pub wavelet_levels: Levels,
    /// Relative singular-value cutoff for the covariance pseudo-inverse.
    #[arg(long, default_value_t = 1e-3)]
    pub svd_tol: f64,
    #[arg(long)]
    pub svd_max_rank: Option<usize>,
    /// Fixed kernel bandwidth (default: median squared distance).
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Diffusion time.
    #[arg(long, default_value_t = 1.0)]
    pub time: f64,
    #[arg(long, default_value_t = 3)]
    pub dims: usize,
}

fn parse_levels(s: &str) -> Result<Levels, String> {
    s.parse().map_err(|e: snapmap::Error| e.to_string())
}

impl EmbedArgs {
    pub fn config(&self) -> EmbedConfig {
        EmbedConfig {
            wavelet: WaveletSettings {
                enabled: self.wavelet == Switch::On,
                exponent: self.wavelet_exponent,
                levels: self.wavelet_levels,
            },
            rank: RankPolicy {
                rel_tol: self.svd_tol,
                max_rank: self.svd_max_rank,
            },
            bandwidth: BandwidthPolicy {
                epsilon: self.epsilon,
                scale: self.epsilon_scale,
            },
            alpha: self.alpha,
            dims: self.dims,
            time: self.time,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Tanh,
    Cluster,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub method: MethodArg,
    /// Bootstrap replicates (0 disables, otherwise at least 20).
    #[arg(long, default_value_t = 50)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 50)]
    pub kmeans_restarts: usize,
}

impl DetectArgs {
    pub fn config(&self, seed: u64) -> DetectConfig {
        DetectConfig {
            method: match self.method {
                MethodArg::Tanh => DetectMethod::Tanh,
                MethodArg::Cluster => DetectMethod::Cluster,
                MethodArg::Both => DetectMethod::Both,
            },
            bootstrap: self.bootstrap,
            seed,
            kmeans_restarts: self.kmeans_restarts,
            ..DetectConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ObservableArgs {
    /// Centered brane-parity window, e.g. 3x3.
    #[arg(long, value_parser = parse_region)]
    pub brane: Option<Region>,
    /// Column splitting left from right for the imbalance.
    #[arg(long)]
    pub edge: Option<usize>,
    /// Nearest-neighbour parity correlations.
    #[arg(long)]
    pub nnparity: bool,
    /// Reference filling for brane parity (default: dataset mean).
    #[arg(long)]
    pub mean_filling: Option<f64>,
}

fn parse_region(s: &str) -> Result<Region, String> {
    s.parse().map_err(|e: snapmap::Error| e.to_string())
}

impl ObservableArgs {
    pub fn request(&self) -> ObservableRequest {
        ObservableRequest {
            brane: self.brane.map(|r| (r.height, r.width)),
            edge: self.edge,
            nn_parity: self.nnparity,
            mean_filling: self.mean_filling,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.brane.is_none() && self.edge.is_none() && !self.nnparity
    }
}

#[derive(Debug, Args)]
pub struct EmbedCmd {
    /// Dataset directory.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub embed: EmbedArgs,
    /// Also write distances.csv and kernel.csv.
    #[arg(long)]
    pub dump_matrices: bool,
    /// Also write embedding.svg.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct DetectCmd {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    pub detect: DetectArgs,
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct ObservablesCmd {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub observables: ObservableArgs,
}

#[derive(Debug, Args)]
pub struct PipelineCmd {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[command(flatten)]
    pub detect: DetectArgs,
    #[command(flatten)]
    pub observables: ObservableArgs,
    #[arg(long)]
    pub dump_matrices: bool,
}
