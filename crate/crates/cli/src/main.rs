//! Command-line driver: reproducible generate / solve / analyze / verify
//! runs with persistent artifacts.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

use commands::{EXIT_INVALID_CONFIG, EXIT_MISSING_INPUT};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "mslab",
    about = "Numerical laboratory for minimal-cone singular sets in 3D",
    version
)]
struct Cli {
    /// JSON configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for run artifacts.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,

    /// Grid resolution override.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Scene selection override (corpus id or kind).
    #[arg(long, global = true)]
    scene: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write scene data files from the configuration.
    Generate,
    /// Produce discrete minimizers (u, K) from the scene files.
    Solve,
    /// Run scale sweeps and decay checks on the solved states.
    Analyze,
    /// Aggregate checks, compare against the baseline, set the exit code.
    Verify {
        /// Baseline constants file.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write the baseline from this run instead of comparing.
        #[arg(long)]
        init_baseline: bool,
        /// Only this named check decides the exit code.
        #[arg(long)]
        check: Option<String>,
    },
    /// Print the summary table of a finished run.
    Report,
}

fn main() {
    let cli = Cli::parse();
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        // Configuration problems exit 4, IO problems 3.
        if e.to_string().contains("config") || e.to_string().contains("unknown scene") {
            EXIT_INVALID_CONFIG
        } else {
            EXIT_MISSING_INPUT
        }
    });
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Err(e) = cfg.apply_overrides(cli.grid, cli.seed, cli.scene.as_deref()) {
        eprintln!("error: {e:#}");
        return Ok(EXIT_INVALID_CONFIG);
    }
    match cli.command {
        Command::Generate => commands::cmd_generate(&cfg, &cli.out),
        Command::Solve => commands::cmd_solve(&cfg, &cli.out),
        Command::Analyze => commands::cmd_analyze(&cfg, &cli.out),
        Command::Verify {
            baseline,
            init_baseline,
            check,
        } => {
            let baseline_path = baseline.unwrap_or_else(|| {
                PathBuf::from(format!("baselines/reference-{}.json", cfg.lab.grid_n))
            });
            commands::cmd_verify(&cfg, &cli.out, &baseline_path, init_baseline, check.as_deref())
        }
        Command::Report => commands::cmd_report(&cli.out),
    }
}
