//! Operator entry point. Every command resolves its full configuration, writes
//! a run manifest before doing work, and emits machine-readable artifacts next
//! to human-readable progress on stderr.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config violation, 3 unreadable
//! checkpoint, 4 missing EVAL_API_KEY without --mock, 5 not enough fit points.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Checkpoint(String),
    MissingApiKey,
    InsufficientPoints(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Checkpoint(_) => 3,
            CliError::MissingApiKey => 4,
            CliError::InsufficientPoints(_) => 5,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) => format!("config error: {m}"),
            CliError::Checkpoint(m) => format!("checkpoint error: {m}"),
            CliError::MissingApiKey => {
                "EVAL_API_KEY is not set; pass --mock to use the bundled local judge".into()
            }
            CliError::InsufficientPoints(m) => format!("fit error: {m}"),
            CliError::Runtime(m) => m.clone(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

impl From<frailt::trainer::TrainError> for CliError {
    fn from(e: frailt::trainer::TrainError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<frailt::trainer::CheckpointError> for CliError {
    fn from(e: frailt::trainer::CheckpointError) -> Self {
        CliError::Checkpoint(e.to_string())
    }
}

impl From<frailt::data::DataError> for CliError {
    fn from(e: frailt::data::DataError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<frailt::tokenizer::TokenizerError> for CliError {
    fn from(e: frailt::tokenizer::TokenizerError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<frailt::generator::GenerateError> for CliError {
    fn from(e: frailt::generator::GenerateError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("json: {e}"))
    }
}

#[derive(Parser)]
#[command(
    name = "frailt",
    version,
    about = "Recursive-transformer training, generation, judging, and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write checkpoint, vocab, loss CSV, and manifest
    Train(commands::train::TrainArgs),
    /// Train a standard and a budget-matched recursive model side by side
    Compare(commands::compare::CompareArgs),
    /// Sample story completions from a checkpoint
    Generate(commands::generate::GenerateArgs),
    /// Grade completions with an LLM judge (or the bundled mock)
    GptEval(commands::gpt_eval::GptEvalArgs),
    /// Fit score-vs-log-loss lines and emit plot data
    Fit(commands::fit::FitArgs),
    /// Print the embedded published validation-loss tables
    Reference(commands::reference::ReferenceArgs),
}

fn main() {
    // Die quietly when stdout is piped into a closed reader (e.g. `| head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Compare(args) => commands::compare::run(args),
        Command::Generate(args) => commands::generate::run(args),
        Command::GptEval(args) => commands::gpt_eval::run(args),
        Command::Fit(args) => commands::fit::run(args),
        Command::Reference(args) => commands::reference::run(args),
    };
    if let Err(error) = result {
        eprintln!("error: {}", error.message());
        std::process::exit(error.exit_code());
    }
}
