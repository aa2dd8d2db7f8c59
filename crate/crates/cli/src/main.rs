//! `dialogrl`: preprocess corpora, train models, generate and evaluate.

mod error;
mod evaluate;
mod generate;
mod manifest;
mod preprocess;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "dialogrl",
    version,
    about = "Affect-aware RL dialogue generation"
)]
struct Cli {
    /// Default directory for corpus splits, vocabulary and checkpoints.
    #[arg(long, global = true, env = "DIALOGRL_DATA_DIR", default_value = ".")]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize a `source<TAB>target` corpus, split it and build the vocabulary.
    Preprocess(preprocess::PreprocessArgs),
    /// Train a model stage.
    Train(Box<train::TrainArgs>),
    /// Train the review usefulness analyzer.
    TrainAnalyzer(train::AnalyzerArgs),
    /// Generate responses for prompts from a file or standard input.
    Generate(generate::GenerateArgs),
    /// Score `prompt<TAB>candidate<TAB>reference` outputs.
    Evaluate(evaluate::EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    Mle,
    Reverse,
    Lm,
    Rl,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<()> {
    let dir = &cli.data_dir;
    match cli.command {
        Command::Preprocess(args) => preprocess::run(dir, args),
        Command::Train(args) => train::run(dir, *args),
        Command::TrainAnalyzer(args) => train::run_analyzer(dir, args),
        Command::Generate(args) => generate::run(dir, args),
        Command::Evaluate(args) => evaluate::run(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
