use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use spanlab::eval::OverlapMode;
use spanlab_cli::{commands, RunConfig};

#[derive(Parser)]
#[command(name = "spanlab", version, about = "Span labeling with generative language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a conditional pattern lookup dataset.
    GenCpl {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Approximate number of words per example.
        #[arg(long, default_value_t = 100)]
        length: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a strategy over a dataset and write predictions.
    Run(RunArgs),
    /// Score a predictions file against its dataset.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Where to write the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sum overlaps per gold/predicted pair instead of using the union.
        #[arg(long)]
        per_pair: bool,
    },
    /// Render a method-by-dataset table from report files.
    Report {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other setting, e.g. `--set mock_policy=adversarial`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("dataset", self.dataset.map(|p| p.display().to_string())),
            ("output", self.out.map(|p| p.display().to_string())),
            ("strategy", self.strategy),
            ("backend", self.backend),
            ("seed", self.seed.map(|s| s.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, &v)?;
            }
        }
        for pair in &self.set {
            config.set_pair(pair)?;
        }
        Ok(config)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenCpl {
            count,
            seed,
            length,
            out,
        } => {
            commands::gen_cpl(count, seed, length, &out)?;
            eprintln!("wrote {count} examples to {}", out.display());
        }
        Command::Run(args) => {
            let config = args.into_config()?;
            let summary = commands::run(&config)?;
            eprintln!(
                "{} examples, {} transport errors, {} parse failures, {} truncated",
                summary.examples, summary.transport_errors, summary.parse_failures, summary.truncated
            );
        }
        Command::Eval {
            predictions,
            dataset,
            out,
            per_pair,
        } => {
            let mode = if per_pair {
                OverlapMode::PerPair
            } else {
                OverlapMode::Union
            };
            let (_, table) = commands::eval(&predictions, &dataset, out.as_deref(), mode)?;
            print!("{table}");
        }
        Command::Report { reports, out } => {
            let table = commands::report(&reports)?;
            match out {
                Some(path) => fs::write(&path, table).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}
