use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tda_core::{ConfigLayer, Method, UpdateOrder};

/// Streaming test-time adaptation over precomputed embeddings.
///
/// Every config flag can also be set through an environment variable named
/// `TDA_<FLAG>` (e.g. `TDA_POS_CAPACITY=6`). Precedence: flag, environment,
/// config file, built-in default.
#[derive(Debug, Parser)]
#[command(name = "tda", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream a dataset through one method and report accuracy and timing.
    Run(RunArgs),
    /// Run all five methods on the same stream.
    Compare(CompareArgs),
    /// Evaluate a cross product of hyperparameter values.
    GridSearch(GridArgs),
    /// Write a synthetic shifted dataset in TDAE format.
    GenSynth(SynthArgs),
    /// Summarize a cache dump written by `run --dump-caches`.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// TDAE dataset file.
    #[arg(long, env = "TDA_DATASET")]
    pub dataset: PathBuf,

    /// TOML config file; flags override its values.
    #[arg(long, env = "TDA_CONFIG")]
    pub config: Option<PathBuf>,

    /// Storage precision for features and head.
    #[arg(long, value_enum, default_value = "f32", env = "TDA_PRECISION")]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct ConfigFlags {
    /// Positive cache shot capacity per class.
    #[arg(long, env = "TDA_POS_CAPACITY")]
    pub pos_capacity: Option<usize>,
    /// Negative cache shot capacity per class.
    #[arg(long, env = "TDA_NEG_CAPACITY")]
    pub neg_capacity: Option<usize>,
    /// Probability above which a class is masked in a negative entry.
    #[arg(long, env = "TDA_MASK_THRESHOLD")]
    pub mask_threshold: Option<f64>,
    /// Lower bound of the negative-cache entropy gate (exclusive).
    #[arg(long, env = "TDA_ENTROPY_LOW")]
    pub entropy_low: Option<f64>,
    /// Upper bound of the negative-cache entropy gate (exclusive).
    #[arg(long, env = "TDA_ENTROPY_HIGH")]
    pub entropy_high: Option<f64>,
    #[arg(long, env = "TDA_POS_ALPHA")]
    pub pos_alpha: Option<f64>,
    #[arg(long, env = "TDA_POS_BETA")]
    pub pos_beta: Option<f64>,
    #[arg(long, env = "TDA_NEG_ALPHA")]
    pub neg_alpha: Option<f64>,
    #[arg(long, env = "TDA_NEG_BETA")]
    pub neg_beta: Option<f64>,
    /// Multiplier applied to cosine similarities to form logits.
    #[arg(long, env = "TDA_LOGIT_SCALE")]
    pub logit_scale: Option<f64>,
    /// update-then-predict or predict-then-update.
    #[arg(long, env = "TDA_UPDATE_ORDER", value_parser = parse_order)]
    pub update_order: Option<UpdateOrder>,
}

impl ConfigFlags {
    pub fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            pos_capacity: self.pos_capacity,
            neg_capacity: self.neg_capacity,
            mask_threshold: self.mask_threshold,
            entropy_low: self.entropy_low,
            entropy_high: self.entropy_high,
            pos_alpha: self.pos_alpha,
            pos_beta: self.pos_beta,
            neg_alpha: self.neg_alpha,
            neg_beta: self.neg_beta,
            logit_scale: self.logit_scale,
            update_order: self.update_order,
        }
    }
}

fn parse_order(s: &str) -> Result<UpdateOrder, String> {
    s.parse().map_err(|e: tda_core::TdaError| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: tda_core::TdaError| e.to_string())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigFlags,

    /// zero-shot, tip-adapter, tda-positive-only, tda-negative-only or tda-full.
    #[arg(long, default_value = "tda-full", env = "TDA_METHOD", value_parser = parse_method)]
    pub method: Method,

    /// Write the report as CSV to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Write the final cache contents as JSON to this file.
    #[arg(long)]
    pub dump_caches: Option<PathBuf>,

    /// Stream in seeded random order. Several seeds report mean and sd.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub shuffle_seed: Vec<u64>,

    /// TDAE file whose first `pos_capacity` labeled records per class form
    /// the tip-adapter support set. Defaults to the stream itself.
    #[arg(long)]
    pub support: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigFlags,

    /// Write the comparison as CSV to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Stream in seeded random order. Several seeds report mean and sd.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub shuffle_seed: Vec<u64>,

    /// Tip-adapter support set, as for `run`.
    #[arg(long)]
    pub support: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value = "tda-full", value_parser = parse_method)]
    pub method: Method,

    /// Values to try, comma separated. Unset lists use the base config value.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub pos_capacity: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub neg_capacity: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub mask_threshold: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub entropy_low: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub entropy_high: Vec<f64>,
    /// Applied to both caches.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub alpha: Vec<f64>,
    /// Applied to both caches.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub beta: Vec<f64>,

    /// Maximum number of combinations.
    #[arg(long, default_value_t = tda_core::harness::DEFAULT_GRID_LIMIT)]
    pub limit: usize,

    /// Write the ranked results as CSV to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Destination TDAE file.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 1)]
    pub prototype_seed: u64,
    #[arg(long, default_value_t = 2)]
    pub stream_seed: u64,
    /// Rotation between head prototypes and sample centers, in radians.
    #[arg(long, default_value_t = 1.25)]
    pub shift: f64,
    /// Per-coordinate noise standard deviation.
    #[arg(long, default_value_t = 0.06)]
    pub noise: f64,
    /// Zipf exponent for a long-tailed class prior.
    #[arg(long)]
    pub zipf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// JSON dump written by `run --dump-caches`.
    pub dump: PathBuf,

    /// Write per-class statistics as CSV to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
