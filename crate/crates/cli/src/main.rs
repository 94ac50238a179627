//! Command-line front end: parses configuration, orchestrates simulations
//! and analyses, and emits tables, curves and report files.

mod commands;
mod config;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use commands::{Context_, Format, SecurityMode};
use config::Config;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "tcqkd",
    version,
    about = "Photon-level simulator and security analyzer for time-coded quantum key distribution"
)]
struct Cli {
    /// Configuration file (TOML, or JSON by extension). Defaults embed the
    /// standard setup. TCQKD_SECTION__KEY environment variables override
    /// single keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every stochastic stage derives its streams from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Worker threads (default: all cores). Output is identical for any
    /// value.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Format of the tabular artifacts.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Curves,
    Tables,
    Range,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a transmission and report the measured QBER.
    Simulate,
    /// Run the interferometer arm and estimate the pulse autocorrelation.
    Coherence,
    /// Security analysis: information curves, tables, or the range
    /// estimate.
    Security {
        #[arg(long, value_enum, default_value_t = ModeArg::Curves)]
        mode: ModeArg,
    },
    /// All of the above plus a markdown summary against reference targets.
    Report,
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let config = Config::load(cli.config.as_deref())?;
    let ctx = Context_ {
        config,
        seed: cli.seed,
        out: cli.out,
        format: match cli.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        },
    };
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&ctx),
        Command::Coherence => commands::cmd_coherence(&ctx),
        Command::Security { mode } => commands::cmd_security(
            &ctx,
            match mode {
                ModeArg::Curves => SecurityMode::Curves,
                ModeArg::Tables => SecurityMode::Tables,
                ModeArg::Range => SecurityMode::Range,
            },
        ),
        Command::Report => commands::cmd_report(&ctx),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
