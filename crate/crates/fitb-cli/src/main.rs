//! `fitb`: corpus ingestion, blank construction, few-shot prompts, baseline
//! generation, and metric evaluation from one reproducible command line.
//!
//! All randomness flows from `--seed` (or `FITB_SEED`); identical inputs,
//! config and seed produce identical outputs for any `--workers` count.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

use commands::Ctx;
use config::FileConfig;

#[derive(Parser)]
#[command(name = "fitb", version, about = "Fill-in-the-blank dataset pipeline")]
struct Cli {
    /// Global seed for all randomness.
    #[arg(long, global = true, env = "FITB_SEED")]
    seed: Option<u64>,
    /// Worker shards for ingestion and counting.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML or JSON config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus utilities.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Build a training or evaluation dataset from a corpus.
    Build(commands::BuildArgs),
    /// Assemble a few-shot prompt from built examples.
    Fewshot(commands::FewshotArgs),
    /// Run a baseline generator over built examples.
    Generate(commands::GenerateArgs),
    /// Compute metrics over generation records.
    Evaluate(commands::EvaluateArgs),
    /// N-gram fluency scorer.
    Lm {
        #[command(subcommand)]
        command: LmCommand,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Print document/word/sentence counts after ingestion.
    Stats(commands::CorpusStatsArgs),
}

#[derive(Subcommand)]
enum LmCommand {
    /// Train an interpolated n-gram model on a corpus.
    Train(commands::LmTrainArgs),
    /// Score texts with a trained model.
    Score(commands::LmScoreArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        workers: cli.workers.or(file.workers).unwrap_or(1).max(1),
        file,
        command_line: std::env::args().collect::<Vec<_>>().join(" "),
    };
    match cli.command {
        Command::Corpus {
            command: CorpusCommand::Stats(args),
        } => commands::corpus_stats(&ctx, args),
        Command::Build(args) => commands::build(&ctx, args),
        Command::Fewshot(args) => commands::fewshot(&ctx, args),
        Command::Generate(args) => commands::generate(&ctx, args),
        Command::Evaluate(args) => commands::evaluate_cmd(&ctx, args),
        Command::Lm {
            command: LmCommand::Train(args),
        } => commands::lm_train(&ctx, args),
        Command::Lm {
            command: LmCommand::Score(args),
        } => commands::lm_score(&ctx, args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}
