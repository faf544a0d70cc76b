//! `srg` — batch driver for shared-reconstruction-graph pipelines.
//!
//! Subcommands: `gen` (synthetic data), `tune` (cross-validated weight
//! search), `fit` (learn the graph and synthesize unseen prototypes),
//! `eval` (zero-shot / generalized metrics), `cluster` (latent class
//! clusters), `shift-report` (pairwise-distance comparison of two spaces).
//! Each takes a `key = value` config file; `--seed` and `--threads`
//! override the config. Exit codes: 0 success, 2 input validation,
//! 3 numerical failure, 4 non-convergence (fit still writes its model).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::Config;

#[derive(Parser)]
#[command(name = "srg", version, about = "shared reconstruction graphs for zero-shot prototype synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-truth synthetic dataset and a ready run config
    Gen(RunArgs),
    /// Cross-validated search over the weight grids
    Tune(RunArgs),
    /// Learn the graph and synthesize unseen image prototypes
    Fit(RunArgs),
    /// Evaluate a fitted model under the zsl or gzsl protocol
    Eval(RunArgs),
    /// Spectral clustering of classes on the learned graph
    Cluster(RunArgs),
    /// Compare the pairwise-distance structure of two embedding spaces
    #[command(name = "shift-report")]
    ShiftReport(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the key = value run configuration
    #[arg(long)]
    config: PathBuf,
    /// Thread budget for per-class solves and grid points (0 = default)
    #[arg(long)]
    threads: Option<usize>,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args): (&str, &RunArgs) = match &cli.command {
        Command::Gen(a) => ("gen", a),
        Command::Tune(a) => ("tune", a),
        Command::Fit(a) => ("fit", a),
        Command::Eval(a) => ("eval", a),
        Command::Cluster(a) => ("cluster", a),
        Command::ShiftReport(a) => ("shift-report", a),
    };

    if let Some(threads) = args.threads {
        if threads > 0 {
            // outputs are independent of the pool size by construction
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
            {
                eprintln!("srg {name}: could not size the thread pool: {e}");
                return ExitCode::from(2);
            }
        }
    }

    let config = match Config::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("srg {name}: {e}");
            return ExitCode::from(2);
        }
    };

    let result = match &cli.command {
        Command::Gen(_) => commands::cmd_gen(&config, args.seed),
        Command::Tune(_) => commands::cmd_tune(&config, args.seed),
        Command::Fit(_) => commands::cmd_fit(&config, args.seed),
        Command::Eval(_) => commands::cmd_eval(&config, args.seed),
        Command::Cluster(_) => commands::cmd_cluster(&config, args.seed),
        Command::ShiftReport(_) => commands::cmd_shift_report(&config, args.seed),
    };

    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("srg {name}: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
