//! CLI for the Monte Carlo harness: run a config file, or use a preset
//! subcommand for the standard sweeps and convergence traces.

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use fim_sim::{emit_results, run_experiment, ExperimentConfig, Sweep};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "fim-sim", version, about = "FIM downlink Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the config; omitted fields take the reference defaults.
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the SINR target over 0, 5, 10, 15 dB (reference setup).
    SweepGamma {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the propagation path count over 2, 4, 8, 16 (reference setup).
    SweepPaths {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the morphing range over 0, λ/4, λ/2, 3λ/4, λ (reference setup).
    SweepZeta {
        #[command(flatten)]
        common: Common,
    },
    /// Record per-iteration convergence traces (4-element surface, 4 paths).
    Converge {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Directory the artifacts are written into.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the number of trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the base seed (trial t uses seed base + t).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn preset(sweep: Sweep) -> ExperimentConfig {
    ExperimentConfig {
        sweep,
        ..ExperimentConfig::default()
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let (mut config, common) = match cli.command {
        Command::Run { config, common } => (ExperimentConfig::load(&config)?, common),
        Command::SweepGamma { common } => (
            preset(Sweep::SinrDb(vec![0.0, 5.0, 10.0, 15.0])),
            common,
        ),
        Command::SweepPaths { common } => (preset(Sweep::Paths(vec![2, 4, 8, 16])), common),
        Command::SweepZeta { common } => (
            preset(Sweep::MorphingRange(vec![0.0, 0.25, 0.5, 0.75, 1.0])),
            common,
        ),
        Command::Converge { common } => {
            let mut config = preset(Sweep::None);
            config.surface.n_z = 2;
            config.channel.paths = 4;
            (config, common)
        }
    };
    if let Some(trials) = common.trials {
        config.run.trials = trials;
    }
    if let Some(seed) = common.seed {
        config.run.base_seed = seed;
    }
    config.validate()?;

    let result = run_experiment(&config, common.workers)?;
    for row in &result.rows {
        let at = if row.sweep_value.is_nan() {
            String::new()
        } else {
            format!(" @ {}", row.sweep_value)
        };
        println!(
            "{}{at}: mean {:.3} dBm (std {:.3}, {} ok / {} failed)",
            row.scheme, row.mean_power_dbm, row.std_power_dbm, row.trials_ok, row.trials_failed
        );
    }
    for path in emit_results(&result, &common.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
