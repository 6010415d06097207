mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, DistanceArgs, IngestArgs, ModelArgs, RunConfig};

/// Lexical variation maps from geotagged microblog posts.
#[derive(Debug, Parser)]
#[command(name = "lexvar", version)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the frequency model from a corpus; writes `model.csv` and `skip_report.json`.
    Ingest(IngestArgs),
    /// Majority-variant map of one concept (GeoJSON + SVG).
    Majority {
        #[command(flatten)]
        model: ModelArgs,
        /// Concept id.
        #[arg(long)]
        concept: String,
    },
    /// Distance matrix and normalized distance field(s).
    Distance {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        distance: DistanceArgs,
    },
    /// List the concepts and variants of the configured lexicon.
    Concepts,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let none_ingest = IngestArgs::default();
    let none_model = ModelArgs::default();
    let none_distance = DistanceArgs::default();
    match &cli.command {
        Command::Ingest(ingest) => {
            let cfg = RunConfig::resolve(&cli.common, ingest, &none_model, &none_distance)?;
            commands::ingest(&cfg)
        }
        Command::Majority { model, concept } => {
            let cfg = RunConfig::resolve(&cli.common, &none_ingest, model, &none_distance)?;
            commands::majority(&cfg, concept)
        }
        Command::Distance { model, distance } => {
            let cfg = RunConfig::resolve(&cli.common, &none_ingest, model, distance)?;
            commands::distance(&cfg)
        }
        Command::Concepts => {
            let cfg = RunConfig::resolve(&cli.common, &none_ingest, &none_model, &none_distance)?;
            commands::concepts(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
