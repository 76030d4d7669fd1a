//! `hedgelab` command-line front end.
//!
//! Subcommands mirror the library's experiment stages: `simulate` writes a
//! quote panel CSV, `build-samples` turns a panel into hedge samples,
//! `run` executes the full train/evaluate pipeline, `report` re-scores a
//! previous run's artifacts, and `validate-config` checks a config file
//! without running anything.
//!
//! On failure the process exits nonzero after printing a one-line JSON
//! error summary to stderr: `{"error": "...", "command": "..."}`.

use clap::{Parser, Subcommand};
use hedgelab::evaluation::format_report;
use hedgelab::experiment::{
    cmd_build_samples, cmd_report, cmd_run, cmd_simulate, ExperimentConfig, ExperimentError,
};
use hedgelab::pipeline::FeatureModel;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "hedgelab", version, about = "Delta-hedging laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a quote panel and write it as CSV (plus a metadata sidecar).
    Simulate {
        /// Experiment config (TOML).
        #[arg(short, long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build hedge samples from the configured data source for one feature set.
    BuildSamples {
        #[arg(short, long)]
        config: PathBuf,
        /// Feature set, e.g. Fea2 .. Fea7 or Fea3-CL.
        #[arg(short, long)]
        features: String,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the full pipeline: data, samples, training, evaluation, artifacts.
    Run {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Re-score the saved artifacts of a previous run.
    Report {
        /// The run's output directory.
        #[arg(short, long)]
        dir: PathBuf,
    },
    /// Parse and validate a config file; print the fully resolved config.
    ValidateConfig {
        #[arg(short, long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let meta = cmd_simulate(&cfg, &out)?;
            println!(
                "wrote {} quotes over {} days to {}",
                meta.quotes,
                meta.days,
                out.display()
            );
        }
        Command::BuildSamples { config, features, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let model: FeatureModel =
                features.parse().map_err(|e: hedgelab::pipeline::PipelineError| {
                    ExperimentError::Config(e.to_string())
                })?;
            let (written, skipped) = cmd_build_samples(&cfg, model, &out)?;
            println!("wrote {written} samples ({skipped} pairings skipped) to {}", out.display());
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let outcome = cmd_run(&cfg)?;
            let summary = std::fs::read_to_string(outcome.output_dir.join("summary.txt"))
                .unwrap_or_default();
            print!("{summary}");
            println!("artifacts under {}", outcome.output_dir.display());
            if !outcome.failures.is_empty() {
                eprintln!("{} pair(s) failed; see summary", outcome.failures.len());
            }
        }
        Command::Report { dir } => {
            for (name, report) in cmd_report(&dir)? {
                print!("{}", format_report(&name, &report));
            }
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok");
            print!("{}", cfg.to_toml_string());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let command = std::env::args().nth(1).unwrap_or_default();
    if let Err(e) = run(cli) {
        eprintln!(
            "{}",
            serde_json::json!({ "error": e.to_string(), "command": command })
        );
        std::process::exit(1);
    }
}
