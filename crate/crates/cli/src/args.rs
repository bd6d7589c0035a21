use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "immsbm",
    version,
    about = "Interacting mixed-membership stochastic block model"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "IMMSBM_THREADS")]
    pub threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand message records (JSONL) into a triplet file.
    Expand(ExpandArgs),
    /// Split messages into train and test triplet files.
    Split(SplitArgs),
    /// Fit a model on a triplet file.
    Train(TrainArgs),
    /// Choose the number of clusters by AIC.
    Select(SelectArgs),
    /// Score a model or baseline on a test triplet file.
    Eval(EvalArgs),
    /// Interaction and membership analysis of a fitted model.
    Analyze(AnalyzeArgs),
    /// Sample a synthetic triplet dataset from known parameters.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelfPairs {
    /// Self-pair (a, a) counted twice, once per ordering.
    Double,
    /// Plain Cartesian square.
    Single,
}

impl From<SelfPairs> for immsbm::corpus::SelfPairWeight {
    fn from(s: SelfPairs) -> Self {
        match s {
            SelfPairs::Double => Self::Double,
            SelfPairs::Single => Self::Single,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Messages, one JSON object per line; with --window, one JSON array of labels per line.
    pub messages: PathBuf,
    /// Output triplet file.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Treat input as sequences: the previous N items predict the next one.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_enum, default_value = "double")]
    pub self_pairs: SelfPairs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub messages: PathBuf,
    /// Directory receiving train.tsv and test.tsv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "double")]
    pub self_pairs: SelfPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Immsbm,
    Mmsbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AicChoice {
    Plain,
    Symmetric,
}

/// Training options shared by `train` and `select`; unset flags fall back to
/// the config file, then to built-in defaults.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// TOML file with any of: clusters, restarts, max_iters, rel_tol, seed, aic_params.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "immsbm")]
    pub model: ModelChoice,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training triplet file.
    pub train: PathBuf,
    /// Output model file (JSON).
    #[arg(short, long)]
    pub out: PathBuf,
    /// Number of clusters.
    #[arg(short = 'T', long = "clusters", visible_alias = "T")]
    pub clusters: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Write the log-likelihood trace of the chosen restart as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    pub train: PathBuf,
    /// Output AIC table (CSV).
    #[arg(short, long)]
    pub out: PathBuf,
    /// Candidate cluster counts (default 5,10,...,50).
    #[arg(long = "candidates", visible_alias = "T-list", value_delimiter = ',')]
    pub candidates: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub aic_params: Option<AicChoice>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Naive,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NaiveSource {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatkChoice {
    K,
    Min,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Test triplet file.
    pub test: PathBuf,
    /// Fitted model to score.
    #[arg(
        long,
        conflicts_with = "baseline",
        required_unless_present = "baseline"
    )]
    pub model: Option<PathBuf>,
    /// Score a baseline instead of a model.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Where the naive baseline takes its output frequencies from.
    #[arg(long, value_enum, default_value = "train")]
    pub naive_source: NaiveSource,
    /// Training triplet file (naive baseline, unseen-pair count).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Output report (JSON).
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "min")]
    pub patk_denominator: PatkChoice,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Write the precision/recall threshold curve as CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub model: PathBuf,
    /// Triplets over which interaction effects are averaged.
    pub data: PathBuf,
    /// Directory receiving interaction.json, v_matrix.csv and clusters.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Membership threshold for the cluster listing.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// Keep at most this many entities per cluster.
    #[arg(long)]
    pub top_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NonInteractingChoice {
    Averaged,
    Constant,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator spec (JSON); inline flags override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Directory receiving triplets.tsv, truth.json and spec.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub outputs: Option<usize>,
    #[arg(short = 'T', long = "clusters", visible_alias = "T")]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw pair members with weight (rank + 1)^-EXPONENT instead of uniformly.
    #[arg(long, value_name = "EXPONENT")]
    pub power_law: Option<f64>,
    /// Replace p with a variant that has no cluster interaction.
    #[arg(long, value_enum)]
    pub noninteracting: Option<NonInteractingChoice>,
}
