use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mergebench::metrics::DriveMode;
use mergebench::scenario::DensityClass;

#[derive(Debug, Parser)]
#[command(name = "mergebench", version, about = "Closed-loop benchmark for dense highway merging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample scenario files for each density class.
    #[command(args_override_self = true)]
    Gen(GenArgs),
    /// Fit the density mixture on a directory of scenarios.
    #[command(name = "fit-gmm", args_override_self = true)]
    FitGmm(FitGmmArgs),
    /// Build an imitation dataset and train the attention policy.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Run a batch of episodes, score them, and write a report.
    #[command(args_override_self = true)]
    Run(RunArgs),
    /// Merge per-episode results into per-planner tables.
    #[command(args_override_self = true)]
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityArg {
    Highly,
    Medium,
    Lower,
}

impl From<DensityArg> for DensityClass {
    fn from(d: DensityArg) -> Self {
        match d {
            DensityArg::Highly => DensityClass::HighlyDense,
            DensityArg::Medium => DensityClass::MediumDense,
            DensityArg::Lower => DensityClass::LowerDense,
        }
    }
}

pub fn densities(v: &[DensityArg]) -> Vec<DensityClass> {
    if v.is_empty() {
        return DensityClass::ALL.to_vec();
    }
    let mut out: Vec<DensityClass> = v.iter().map(|d| (*d).into()).collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hurry,
    Medium,
    Relax,
}

impl From<ModeArg> for DriveMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hurry => DriveMode::Hurry,
            ModeArg::Medium => DriveMode::Medium,
            ModeArg::Relax => DriveMode::Relax,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnvPolicyArg {
    Rule,
    Idm,
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvaluatorArg {
    Rubric,
    Llm,
    /// Ask the LLM, score with the rubric when it fails.
    LlmRubric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlannerArg {
    /// Merge when the main-lane slot is open, otherwise creep.
    IdmGap,
    /// Constant zero-acceleration, zero-steer profile.
    Scripted,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Files per density class.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, value_delimiter = ',')]
    pub density: Vec<DensityArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitGmmArgs {
    /// Directory of scenario JSON files.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Model JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Rollouts used to build the dataset.
    #[arg(long, default_value_t = 30)]
    pub scenes: usize,
    /// Keep at most this many training windows.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weights file; `.json` selects the text form.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, value_delimiter = ',')]
    pub density: Vec<DensityArg>,
    /// Load scenarios from a directory or a `dir/*.json`-style pattern
    /// instead of sampling them.
    #[arg(long)]
    pub scenarios: Option<String>,
    #[arg(long, value_enum, default_value_t = EnvPolicyArg::Rule)]
    pub env_policy: EnvPolicyArg,
    /// Weights for `--env-policy neural`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlannerArg::IdmGap)]
    pub planner: PlannerArg,
    #[arg(long, value_enum, default_value_t = EvaluatorArg::Rubric)]
    pub evaluator: EvaluatorArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Medium)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Skip the per-episode CSV/JSON logs.
    #[arg(long)]
    pub no_logs: bool,
    #[arg(long, default_value_t = 300)]
    pub timeout_ticks: usize,
    #[arg(long, default_value = "http://127.0.0.1:8080/v1")]
    pub llm_url: String,
    #[arg(long, default_value = "deepseek-r1")]
    pub llm_model: String,
    /// Environment variable holding the LLM bearer token.
    #[arg(long)]
    pub token_env: Option<String>,
    /// Per-request LLM timeout, seconds.
    #[arg(long, default_value_t = 30.0)]
    pub llm_timeout: f64,
    #[arg(long, default_value_t = 2)]
    pub llm_retries: u32,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `episodes.json` files or run directories containing one.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub input: Vec<PathBuf>,
    /// Directory for the merged tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
