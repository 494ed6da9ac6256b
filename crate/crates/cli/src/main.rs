//! groundtex — seeded, reproducible pipeline runner for ground-image
//! retrieval experiments: generate or ingest maps, build training pairs,
//! train the embedding network, embed and index images, run the BoW
//! baseline, retrieve, evaluate, and localize.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical
//! failure (training divergence).

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use groundtex::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "groundtex", version, about = "Ground-image retrieval pipeline")]
struct Cli {
    /// Declarative TOML config; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override applied to every seeded stage of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap the worker thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overwrite existing non-empty output locations.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic map set (canvas + posed reference/query images).
    Generate(commands::GenerateArgs),
    /// Validate a user-supplied manifest and rewrite it in canonical layout.
    Ingest(commands::IngestArgs),
    /// Build the shuffled positive/negative training pair list.
    Pairs(commands::PairsArgs),
    /// Train the Siamese embedding network on pair lists.
    Train(commands::TrainArgs),
    /// Embed map images with a trained checkpoint.
    Embed(commands::EmbedArgs),
    /// Load an embedding database and report index statistics.
    Index(commands::IndexArgs),
    /// Build the BoW visual vocabulary from a map's references.
    BowVocab(commands::BowVocabArgs),
    /// Compute BoW histograms for map images.
    BowEmbed(commands::BowEmbedArgs),
    /// Retrieve top-k references for every query embedding.
    Retrieve(commands::RetrieveArgs),
    /// Score a retrieval run: recall table, bands, failure counts.
    Eval(commands::EvalArgs),
    /// Run the localization campaign (all references or top-k retrievals).
    Localize(commands::LocalizeArgs),
    /// Merge per-texture report directories and add cross-texture averages.
    Report(commands::ReportArgs),
    /// Sweep the BoW features-per-image budget and report R0@k per value.
    Sweep(commands::SweepArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("groundtex: failed to configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let ctx = commands::Context {
        config: cli.config,
        seed: cli.seed,
        force: cli.force,
    };
    let result = match cli.command {
        Command::Generate(args) => commands::generate(&ctx, args),
        Command::Ingest(args) => commands::ingest(&ctx, args),
        Command::Pairs(args) => commands::pairs(&ctx, args),
        Command::Train(args) => commands::train(&ctx, args),
        Command::Embed(args) => commands::embed(&ctx, args),
        Command::Index(args) => commands::index(&ctx, args),
        Command::BowVocab(args) => commands::bow_vocab(&ctx, args),
        Command::BowEmbed(args) => commands::bow_embed(&ctx, args),
        Command::Retrieve(args) => commands::retrieve(&ctx, args),
        Command::Eval(args) => commands::eval(&ctx, args),
        Command::Localize(args) => commands::localize(&ctx, args),
        Command::Report(args) => commands::report(&ctx, args),
        Command::Sweep(args) => commands::sweep(&ctx, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("groundtex: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::TrainingFailure { .. } => 4,
        _ => 3,
    }
}
