//! `tanklab`: simulate the household corpus, run the transfer-learning grid,
//! score the reheat-control study, and export plot data.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tanklab::config::RunConfig;
use tanklab::{pipeline, Error};

#[derive(Parser)]
#[command(name = "tanklab", version, about)]
struct Cli {
    /// JSON run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (corpus, models, result files).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads; omit to use every core. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the synthetic household corpus and persist it.
    Simulate,
    /// Train the full model grid against a simulated corpus and emit
    /// learning_curves.csv, cross_matrix.csv and summary.json.
    Experiment,
    /// Schedule and score the comfort-constrained control study against the
    /// saved experiment models, emitting control_outcomes.csv.
    Control,
    /// Derive fig2_data.csv and fig3_data.csv from existing results.
    Report,
}

/// 0 success, 2 config error, 3 missing prerequisite, 4 runtime fault.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 2,
        Error::MissingPrerequisite(_) => 3,
        _ => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    let out = cli.out;
    pipeline::with_jobs(cli.jobs, move || -> Result<(), Error> {
        match cli.command {
            Command::Simulate => {
                let corpus = pipeline::run_simulate(&cfg, &out)?;
                println!(
                    "simulated {} source + {} target households into {}",
                    corpus.source.len(),
                    corpus.target.len(),
                    pipeline::corpus_dir(&out).display()
                );
            }
            Command::Experiment => {
                let corpus = pipeline::load_corpus(&cfg, &out)?;
                let (outcome, matrix, _summary) = pipeline::run_experiment(&cfg, &corpus, &out)?;
                println!(
                    "experiment grid: {} result rows, {} missing cells, {}x{} cross matrix",
                    outcome.rows.len(),
                    outcome.missing.len(),
                    matrix.n(),
                    matrix.n()
                );
            }
            Command::Control => {
                let corpus = pipeline::load_corpus(&cfg, &out)?;
                let study = pipeline::run_control(&cfg, &corpus, &out)?;
                println!("control study: {} rows", study.rows.len());
                if study.warnings > 0 {
                    eprintln!(
                        "warning: {} model file(s) missing; see diagnostic rows",
                        study.warnings
                    );
                }
            }
            Command::Report => {
                pipeline::run_report(&out)?;
                println!(
                    "wrote {} and {}",
                    out.join(pipeline::FIG2_FILE).display(),
                    out.join(pipeline::FIG3_FILE).display()
                );
            }
        }
        Ok(())
    })?
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
