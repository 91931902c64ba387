//! `pagerec`: experiment runner for session recommendation with non-item
//! pages. Exit codes: 0 success, 1 invalid arguments/config, 2 runtime
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pagerec", version, about = "Session recommendation with non-item pages")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat JSON config file with dotted keys (e.g. {"train.lr": 0.001}).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key (repeatable), e.g. --set train.epochs=5.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory (overrides config key out_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seeds as a comma-separated list (overrides config key seeds).
    #[arg(long, global = true, value_delimiter = ',', value_name = "CSV")]
    seeds: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Load a session log, preprocess it and report corpus statistics.
    Ingest,
    /// Generate an enriched session dataset from a ratings file.
    Synth,
    /// Compare transition hypotheses over a belief sweep.
    Hyptrails,
    /// Train one model per seed and aggregate the evaluation reports.
    Train,
    /// Evaluate a checkpoint (or the popularity baseline) on a split.
    Eval,
    /// Train across page-shuffle ratios plus an items-only reference.
    #[command(name = "noise-sweep")]
    NoiseSweep,
    /// Embedding-similarity divergence tables and embedding export.
    Analyze,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let mut cfg = match config::load_config(cli.config.as_deref(), &cli.set) {
        Ok(cfg) => cfg,
        Err(message) => {
            eprintln!("config error: {message}");
            return ExitCode::from(1);
        }
    };
    if let Some(out) = cli.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(seeds) = cli.seeds {
        if seeds.is_empty() {
            eprintln!("config error: --seeds must not be empty");
            return ExitCode::from(1);
        }
        cfg.seeds = seeds;
    }

    let result = match cli.command {
        Command::Ingest => commands::cmd_ingest(&cfg),
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Hyptrails => commands::cmd_hyptrails(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Eval => commands::cmd_eval(&cfg),
        Command::NoiseSweep => commands::cmd_noise_sweep(&cfg),
        Command::Analyze => commands::cmd_analyze(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
