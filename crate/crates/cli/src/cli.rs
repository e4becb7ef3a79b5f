use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "projpost",
    version,
    about = "Projected posteriors for a treatment effect under nested control sets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the full-control posterior and write a draws artifact.
    Fit(FitArgs),
    /// Projected treatment posteriors for the subsets in a spec file.
    Project(ProjectArgs),
    /// Backward-stepwise removal path.
    Stepwise(StepwiseArgs),
    /// Write a synthetic dataset as CSV.
    Simulate(SimulateArgs),
    /// Check the block-inverse identities on a dataset and subset.
    Verify(VerifyArgs),
    /// HTTP service answering projection queries against one artifact.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Outcome column.
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Exposure (treatment) column.
    #[arg(long, default_value = "z")]
    pub exposure: String,
    /// Control columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub controls: Vec<String>,
    /// Keep raw columns. Without centering there is no intercept; add a
    /// constant control if one is wanted.
    #[arg(long)]
    pub no_center: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    /// Flat prior on all coefficients, exact draws.
    Flat,
    /// Horseshoe priors under the exposure/outcome parameterization.
    HsRic,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV.
    pub data: PathBuf,
    #[command(flatten)]
    pub data_args: DataArgs,
    #[arg(long, value_enum, default_value = "flat")]
    pub model: ModelKind,
    /// Known noise scale (flat model).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Draw the noise scale under a Jeffreys prior (flat model).
    #[arg(long)]
    pub sample_sigma: bool,
    /// Number of draws (flat model).
    #[arg(long, default_value_t = 4000)]
    pub draws: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sampler config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Controls exempt from shrinkage.
    #[arg(long, value_delimiter = ',')]
    pub unpenalized: Vec<String>,
    /// Artifact path.
    #[arg(long, short, default_value = "fit.ppd")]
    pub out: PathBuf,
    /// Summary JSON path; defaults to the artifact path with `.summary.json`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Also export the draws as CSV.
    #[arg(long)]
    pub draws_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    pub artifact: PathBuf,
    /// JSON array of {"label", "include": [names]}.
    pub spec: PathBuf,
    /// Add refit-posterior columns.
    #[arg(long)]
    pub compare_refit: bool,
    /// Directory for per-label projected draw CSVs.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
    /// Write the rows as JSON here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StepwiseArgs {
    pub artifact: PathBuf,
    /// Stop once this many controls remain.
    #[arg(long)]
    pub keep: Option<usize>,
    /// Stop before the first step whose distance exceeds a threshold,
    /// written `d_M > t`.
    #[arg(long)]
    pub stop_when: Option<String>,
    #[arg(long, short, default_value = "path.json")]
    pub out: PathBuf,
    /// Plot data CSV.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Directory for per-step projected draw CSVs.
    #[arg(long)]
    pub draws_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Design {
    /// Six independent controls, n = 1000.
    Toy,
    /// 25 controls with correlated confounders, n = 1000.
    Wang,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub design: Design,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub data_args: DataArgs,
    /// Controls kept in the reduced design.
    #[arg(long, value_delimiter = ',', conflicts_with = "exclude")]
    pub include: Option<Vec<String>>,
    /// Controls dropped from the reduced design.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub artifact: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Static UI assets served under /ui.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}
