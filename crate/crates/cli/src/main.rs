//! `kgqa`: answer questions over a knowledge graph, evaluate on datasets,
//! inspect matching and compilation, and derive negated datasets.
//!
//! Exit codes: 0 success, 2 configuration, 3 transport, 4 data.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Overrides, Preset, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "kgqa", version, about = "Negation-aware question answering over knowledge graphs")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Knowledge graph directory, overriding the configuration.
    #[arg(long, global = true)]
    kg: Option<PathBuf>,
    #[arg(long, global = true)]
    preset: Option<Preset>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    /// Replay file of recorded completions, overriding `[llm]`.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
    /// Disable self-directed refinement.
    #[arg(long, global = true)]
    no_refine: bool,
    #[arg(long, global = true)]
    ablate: Option<Ablation>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    /// Ground by similarity alone instead of schema-guided matching.
    BruteForceMatching,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question.
    Answer { question: String },
    /// Answer every question of a dataset and score the predictions.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Evaluate a seeded random subset of this size.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Ground a draft logical form and list the candidates.
    Match { draft: String },
    /// Compile a grounded logical form to SPARQL.
    Compile {
        expr: String,
        /// Also run the query and print its answers.
        #[arg(long)]
        execute: bool,
    },
    /// Derive negated variants of a source dataset.
    Nest {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check that flipping each variant back reproduces its source.
        #[arg(long)]
        roundtrip: bool,
        /// Keep one seeded random variant per source.
        #[arg(long)]
        one_per_source: bool,
    },
    /// Export the graph as N-Triples for seeding a SPARQL endpoint.
    ExportRdf {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and save the entity and relation similarity index.
    Index {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        kg_dir: cli.kg,
        preset: cli.preset,
        seed: cli.seed,
        output_dir: cli.output_dir,
        replay: cli.replay,
        no_refine: cli.no_refine,
        brute_force: matches!(cli.ablate, Some(Ablation::BruteForceMatching)),
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Answer { question } => commands::answer(&cfg, &question),
        Command::Eval { dataset, jobs, limit } => commands::eval(&cfg, dataset.as_deref(), jobs.max(1), limit),
        Command::Match { draft } => commands::match_draft(&cfg, &draft),
        Command::Compile { expr, execute } => commands::compile_expr(&cfg, &expr, execute),
        Command::Nest {
            source,
            out,
            roundtrip,
            one_per_source,
        } => commands::nest(
            &cfg,
            commands::NestArgs {
                source: &source,
                out,
                roundtrip,
                one_per_source,
            },
        ),
        Command::ExportRdf { out } => commands::export_rdf(&cfg, out.as_deref()),
        Command::Index { out } => commands::index(&cfg, out.as_deref()),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
