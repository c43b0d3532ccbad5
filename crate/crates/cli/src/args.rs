//! Command-line flags. Every flag has a default except input and output
//! paths.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tfb_core::adapter::PosteriorFamily;
use tfb_core::metrics::{McConvention, MetricKind};
use tfb_core::netcore::{Activation, Task};
use tfb_core::search::ToleranceMode;

#[derive(Debug, Parser)]
#[command(
    name = "tfb-kit",
    version,
    about = "Training-free Bayesianization of low-rank adapters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a small adapted MLP and write a checkpoint.
    Train(TrainArgs),
    /// Attach a posterior to a checkpoint, searching for the scale.
    Bayesianize(BayesianizeArgs),
    /// Evaluate metrics of a checkpoint and write them as CSV.
    Eval(EvalArgs),
    /// Prediction bands of the cubic toy regression at several scales.
    DemoToy(DemoArgs),
    /// Run the covariance and KL self-checks.
    Verify(VerifyArgs),
    /// Write a built-in dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataSource {
    ToyCubic,
    ToyBlobs,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Identity,
    Tanh,
    Relu,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Identity => Activation::Identity,
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Relu => Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    /// Low-rank isotropic posterior.
    Final,
    /// Full-rank isotropic noise on the whole weight.
    Fr,
    /// Constant standard deviation on the regrouped factor.
    Cstd,
}

impl From<FamilyArg> for PosteriorFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Final => PosteriorFamily::LowRankIsotropic,
            FamilyArg::Fr => PosteriorFamily::FullRankIsotropic,
            FamilyArg::Cstd => PosteriorFamily::ConstantStd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    /// Score the sample-averaged predictive distribution.
    Predictive,
    /// Average the per-sample scores.
    PerSample,
}

impl From<ConventionArg> for McConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Predictive => McConvention::PredictiveThenMetric,
            ConventionArg::PerSample => McConvention::MetricThenAverage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ToleranceArg {
    Relative,
    Absolute,
}

impl From<ToleranceArg> for ToleranceMode {
    fn from(t: ToleranceArg) -> Self {
        match t {
            ToleranceArg::Relative => ToleranceMode::RelativeFraction,
            ToleranceArg::Absolute => ToleranceMode::Absolute,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchMode {
    Binary,
    Grid,
}

pub fn parse_metric(s: &str) -> Result<MetricKind, String> {
    MetricKind::parse(s)
        .ok_or_else(|| format!("unknown metric {s:?} (nll, acc, ece, embeddingnorm, mse)"))
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset source.
    #[arg(long = "task", value_enum, default_value = "toy-cubic")]
    pub source: DataSource,
    /// CSV file for `--task file`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Task of a CSV file.
    #[arg(long, value_enum, default_value = "regression")]
    pub kind: TaskArg,
    /// Number of classes (toy blobs, or a classification file).
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Examples per class for toy blobs.
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    /// Distance between neighbouring blob centers.
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    /// Seed of the generated data; defaults to `--seed`.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Seeds initialization and, unless overridden, the data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// L2 penalty on the trainable parameters.
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Hidden width of the two-layer network.
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Adapter rank of both layers (clamped to the layer's smaller side).
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long, value_enum, default_value = "relu")]
    pub activation: ActivationArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BayesianizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    pub search: SearchMode,
    /// Scales for `--search grid`.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.01,0.015,0.02,0.025,0.03,0.035,0.04,0.05"
    )]
    pub grid: Vec<f64>,
    /// Fixed scale; skips the search.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Anchor metric; NLL for classification and MSE for regression by default.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<MetricKind>,
    /// Tolerance; 0.01 for ACC and 0.003 otherwise by default.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum, default_value = "relative")]
    pub tolerance: ToleranceArg,
    #[arg(long, default_value_t = 0.001)]
    pub bracket_lo: f64,
    #[arg(long, default_value_t = 0.015)]
    pub bracket_hi: f64,
    #[arg(long, default_value_t = 5)]
    pub rounds: usize,
    #[arg(long, default_value_t = 10)]
    pub mc_samples: usize,
    /// Seeds the anchor selection and the weight noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "final")]
    pub family: FamilyArg,
    #[arg(long, value_enum, default_value = "predictive")]
    pub convention: ConventionArg,
    /// Anchor CSV; defaults to a subset of the training data.
    #[arg(long)]
    pub anchor: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub anchor_size: usize,
    /// Replace anchor labels by the model's own predictions.
    #[arg(long)]
    pub pseudo_label: bool,
    /// Trace CSV path; the JSON trace goes next to it. Defaults to
    /// `<out>.trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled CSV; defaults to the checkpoint's training data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Regenerate the checkpoint's built-in dataset with this seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Metrics to report; defaults to NLL, ACC and ECE for classification
    /// and MSE for regression.
    #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
    pub metrics: Vec<MetricKind>,
    #[arg(long, default_value_t = 10)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ignore the posterior and use the mean weights.
    #[arg(long)]
    pub deterministic: bool,
    /// Override the checkpoint's posterior family.
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long, value_enum, default_value = "predictive")]
    pub convention: ConventionArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub mc_samples: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.6,1.0,1.5")]
    pub sigmas: Vec<f64>,
    #[arg(long, value_enum, default_value = "fr")]
    pub family: FamilyArg,
    #[arg(long, default_value_t = -6.0, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 6.0, allow_hyphen_values = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 121)]
    pub points: usize,
    /// Use this regression checkpoint instead of training one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Perturb one posterior standard deviation before the covariance check.
    #[arg(long)]
    pub inject_fault: bool,
    /// Also write the results as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Omit the label column.
    #[arg(long)]
    pub no_labels: bool,
    #[arg(long)]
    pub out: PathBuf,
}
