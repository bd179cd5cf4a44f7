use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uqkit::commands::{
    cmd_advise, cmd_calibrate, cmd_report, cmd_sample, cmd_score, CalibrateArgs, ScoreArgs,
};
use uqkit::CliError;
use uqkit_core::{MetricId, TaskType, ValidationLevel};

/// Uncertainty quantification for sampled LLM outputs.
///
/// Exit codes: 0 ok, 1 output write failure, 2 usage or parse error,
/// 3 provider failure, 4 metric incompatible with the data, 5 empty join.
#[derive(Parser)]
#[command(name = "uqkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the K-of-M x R sampling plan and write one JSONL file per item.
    Sample {
        #[arg(long)]
        config: PathBuf,
        /// Prompt variants: JSON list or one per line, each containing {input}.
        #[arg(long)]
        variants: PathBuf,
        /// CSV with columns item_id,text.
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score run records; writes item_id,metric_id,value CSV plus a diagnostics sidecar.
    Score {
        #[arg(long)]
        runs: PathBuf,
        /// Comma-separated metric ids; defaults to the config's list.
        #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
        metrics: Vec<MetricId>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Gold CSV supplying anchors for centroid_anchor_distance.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        allow_partial: bool,
    },
    /// Recommend metrics for a task type (T1/T2/T3) and validation level (V0/V1/V2).
    Advise {
        #[arg(value_parser = parse_task_type)]
        task_type: TaskType,
        #[arg(value_parser = parse_validation)]
        validation_level: ValidationLevel,
        /// Token log-probabilities are available.
        #[arg(long)]
        logprobs: bool,
        #[arg(long)]
        json: bool,
    },
    /// Fit accuracy against uncertainty per metric.
    Calibrate {
        #[arg(long)]
        scores: PathBuf,
        /// CSV with columns item_id,gold_label,category and optional accuracy.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run records used to measure accuracy when the gold file has none.
        #[arg(long)]
        runs: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write the cost report, high-uncertainty flags and farthest-pair excerpts.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_metric(s: &str) -> Result<MetricId, String> {
    s.parse().map_err(|e: uqkit_core::Error| e.to_string())
}

fn parse_task_type(s: &str) -> Result<TaskType, String> {
    s.parse().map_err(|e: uqkit_core::Error| e.to_string())
}

fn parse_validation(s: &str) -> Result<ValidationLevel, String> {
    s.parse().map_err(|e: uqkit_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Sample { config, variants, items, out: dir } => {
            cmd_sample(&config, &variants, &items, &dir, &mut out)
        }
        Command::Score { runs, metrics, out: path, config, gold, allow_partial } => cmd_score(
            &ScoreArgs { runs_dir: runs, metrics, out_path: path, config, gold, allow_partial },
            &mut out,
        ),
        Command::Advise { task_type, validation_level, logprobs, json } => {
            cmd_advise(task_type, validation_level, logprobs, json, &mut out)
        }
        Command::Calibrate { scores, gold, out: dir, runs, config } => cmd_calibrate(
            &CalibrateArgs { scores, gold, out_dir: dir, runs_dir: runs, config },
            &mut out,
        ),
        Command::Report { runs, scores, out: dir, config } => {
            cmd_report(&runs, &scores, &dir, config.as_deref(), &mut out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
