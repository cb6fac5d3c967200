use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "epsctl", version, about = "ε-norm analysis and synthesis for LTI systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full norm report for a stable system (JSON).
    Analyze(AnalyzeArgs),
    /// ε-norm-optimal state feedback, filter or output feedback (JSON).
    Synthesize(SynthArgs),
    /// ε(α) curve on a log grid (CSV `alpha,eps_alpha`).
    Scan(ScanArgs),
    /// Reachable / observable set polygons and matching ellipses (CSV).
    Sets(SetsArgs),
    /// Disturbance-driven trajectory with an invariance summary (CSV + JSON sidecar).
    Simulate(SimulateArgs),
    /// Output-feedback synthesis on the benchmark plant over a β range.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Sf,
    Filter,
    Of,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SetKind {
    ReachInf,
    Reach1,
    Obs1,
    ObsInf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Zero,
    Constant,
    Random,
    WorstCase,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Lower end of the α grid.
    #[arg(long)]
    pub alpha_min: Option<f64>,
    /// Upper end of the α grid (analysis is also clipped to 0.999·(−2r)).
    #[arg(long)]
    pub alpha_max: Option<f64>,
    /// Number of log-spaced grid points.
    #[arg(long)]
    pub alpha_points: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, alias = "plant")]
    pub system: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Sampled directions for MIMO oracle gains.
    #[arg(long)]
    pub dirs: Option<usize>,
    /// Integration horizon for the oracle gains.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the LMI norms (ω, ∘, ∘′).
    #[arg(long)]
    pub no_lmi: bool,
    /// Skip the sampled gain oracles.
    #[arg(long)]
    pub no_oracles: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, alias = "system")]
    pub plant: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Plant file (with `--kind`) or plain system file (without).
    #[arg(long, alias = "system")]
    pub plant: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SetsArgs {
    #[arg(long, alias = "plant")]
    pub system: PathBuf,
    /// Set kinds to export; all four by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub kinds: Vec<SetKind>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = epsctl_core::ellipsoids::DEFAULT_DIRECTIONS)]
    pub dirs: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Closed-loop (or open-loop) system file.
    #[arg(long, conflicts_with = "plant")]
    pub system: Option<PathBuf>,
    /// Plant file; requires `--kind` and `--gains`.
    #[arg(long, requires_all = ["kind", "gains"])]
    pub plant: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Synthesis result JSON holding `k` and/or `l`.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "worst-case")]
    pub policy: PolicyKind,
    /// Constant disturbance, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub w: Vec<f64>,
    /// Initial state, comma separated; defaults to a reference-ellipsoid boundary point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Vec<f64>,
    /// α of the reference ellipsoid; defaults to the ε-norm minimizer.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 30.0)]
    pub t_end: f64,
    /// Step size; defaults to 1e-3·(−1/r).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 3)]
    pub beta_points: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}
