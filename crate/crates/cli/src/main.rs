mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use reweigh::balancer::{DEFAULT_MAX_NAMES, DEFAULT_MAX_RANK};
use reweigh::baselines::DEFAULT_REPETITIONS;
use reweigh::significance::DEFAULT_ITERATIONS;

#[derive(Parser)]
#[command(name = "reweigh", version, about = "Balance a coreference test set and score gender bias under the balancing weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute balancing weights and write `<label>.tsv` plus `<label>.json` metadata.
    Weigh(WeighArgs),
    /// Score prediction files and baselines, one row per system.
    Evaluate(EvaluateArgs),
    /// Write name-count, rank and weight histograms.
    Analyze(AnalyzeArgs),
    /// Drop examples with too many names or a distant correct candidate.
    Trim(TrimArgs),
    /// Paired approximate randomization test between two prediction files.
    Significance(SignificanceArgs),
    /// Run the brute-force oracle checks on random instances.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset in GAP TSV format.
    #[arg(long)]
    dataset: PathBuf,
    /// Name-span annotations, one JSON record per line.
    #[arg(long)]
    annotations: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Family {
    Names,
    Distance,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct TrimFlags {
    /// Keep examples with at most this many annotated names.
    #[arg(long, default_value_t = DEFAULT_MAX_NAMES)]
    max_names: usize,
    /// Keep examples whose correct candidate is at most this many names away.
    #[arg(long, default_value_t = DEFAULT_MAX_RANK)]
    max_rank: usize,
}

#[derive(Args)]
struct WeighArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Property families to balance; empty balances only the group totals.
    #[arg(long, value_enum, value_delimiter = ',', num_args = 0.., default_values_t = [Family::Names, Family::Distance])]
    properties: Vec<Family>,
    /// Trim before weighing.
    #[arg(long)]
    trim: bool,
    #[command(flatten)]
    trim_flags: TrimFlags,
    /// Solve one LP variable per example instead of per class.
    #[arg(long)]
    naive: bool,
    /// Output file stem; defaults to W, W_num, W_dist, W_t or W_none.
    #[arg(long)]
    label: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Prediction file as `[NAME=]PATH`; repeatable.
    #[arg(long)]
    predictions: Vec<String>,
    /// Baseline: `random` or `dist-K`; repeatable, needs annotations.
    #[arg(long)]
    baseline: Vec<String>,
    /// Allow Dist-K baselines with K above 3.
    #[arg(long)]
    allow_large_k: bool,
    /// Monte-Carlo repetitions of the random baseline.
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    repetitions: usize,
    /// Weight file as `[LABEL=]PATH`; one weighted-bias column each.
    #[arg(long)]
    weights: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Weight file as `[LABEL=]PATH`; repeatable.
    #[arg(long)]
    weights: Vec<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// CSV histograms (`text`) or JSON.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct TrimArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    trim_flags: TrimFlags,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Metric {
    AccBias,
    WBias,
    WtBias,
}

#[derive(Args)]
struct SignificanceArgs {
    #[command(flatten)]
    data: DataArgs,
    /// First model's predictions.
    #[arg(long)]
    first: PathBuf,
    /// Second model's predictions.
    #[arg(long)]
    second: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::AccBias)]
    metric: Metric,
    /// Weights for the weighted metrics.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also enumerate all swap patterns when few examples disagree.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random cases per check.
    #[arg(long, default_value_t = 50)]
    instances: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Weigh(a) => commands::weigh(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Trim(a) => commands::trim(a),
        Command::Significance(a) => commands::significance(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
