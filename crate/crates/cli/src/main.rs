//! `vtriplet`: synthetic data, triplet mining, training, embedding and
//! evaluation driven by one TOML config.

mod commands;
mod failure;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vtriplet::config::PipelineConfig;

use crate::commands::Context;
use crate::failure::Failure;
use crate::provenance::Provenance;

#[derive(Parser)]
#[command(name = "vtriplet", version, about = "Triplet-trained place descriptors")]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed everywhere it is used.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 implies deterministic mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory, overriding the config.
    #[arg(long, global = true, env = "VTRIPLET_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset and its manifests.
    Synth,
    /// Mine triplets from the configured sources.
    Mine,
    /// Train the network on the mined triplets.
    Train,
    /// Write a descriptor file per evaluation manifest.
    Embed {
        /// Also write descriptors as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Confusion matrices, inlier curves and heatmaps.
    Eval {
        /// Accept inputs produced by different configs.
        #[arg(long)]
        force: bool,
        /// Also write SVG curve plots.
        #[arg(long)]
        plot: bool,
    },
    /// Gradient checks and kernel oracles.
    Check,
}

fn setup_threads(cli: &Cli) -> Result<(), Failure> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::new("usage", "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new("usage", e.to_string()))?;
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::new("usage", "this command needs --config"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.paths.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    setup_threads(&cli)?;
    if let Command::Check = cli.command {
        let seed = match (&cli.seed, &cli.config) {
            (Some(s), _) => *s,
            (None, Some(_)) => load_config(&cli)?.seed,
            (None, None) => 0,
        };
        return commands::check(seed);
    }
    let config = load_config(&cli)?;
    let provenance = Provenance::new(config.config_hash(), config.seed);
    let ctx = Context { config, provenance };
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Mine => commands::mine(&ctx),
        Command::Train => commands::train_cmd(&ctx),
        Command::Embed { csv } => commands::embed(&ctx, csv),
        Command::Eval { force, plot } => commands::eval(&ctx, force, plot),
        Command::Check => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::FAILURE
        }
    }
}
