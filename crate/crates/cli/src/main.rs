use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use dscm_cli::commands;
use dscm_cli::config::ExperimentConfig;
use dscm_cli::output::out_root;
use dscm_cli::pipeline::Role;
use dscm_core::nlc::ArchKind;

#[derive(Parser)]
#[command(
    name = "dscm",
    about = "Coherent DSCM transmission simulator and nonlinear-compensation workbench"
)]
struct Cli {
    /// Experiment config (JSON). Omit to use the built-in desk profile.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output root; falls back to $DSCM_OUT, then ./out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the built-in desk (or paper) profile as JSON.
    InitConfig {
        #[arg(long)]
        paper: bool,
    },
    /// One transmit -> receive run with metrics.
    Simulate {
        #[arg(long, allow_hyphen_values = true)]
        power: Option<f64>,
        #[arg(long)]
        dump_waveform: bool,
    },
    /// Generate and persist a train or eval dataset.
    GenDataset {
        #[arg(long)]
        role: String,
    },
    /// Train the configured (or given) architecture on the train dataset.
    Train {
        #[arg(long)]
        arch: Option<String>,
    },
    /// Equalize the eval dataset with a trained model.
    Equalize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 64)]
        block_n: usize,
        #[arg(long, allow_hyphen_values = true)]
        power: Option<f64>,
    },
    /// Hyper-parameter sweep with Pareto envelope extraction.
    Sweep {
        #[arg(long)]
        arch: String,
        #[arg(long)]
        models: Option<usize>,
    },
    /// Q vs launch power for a trained model plus baselines.
    PowerSweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 64)]
        block_n: usize,
    },
    /// Analytic perturbation coefficient grids.
    Pertcoef {
        /// Comma-separated offsets, e.g. "0,1,2".
        #[arg(long, default_value = "0,1,2", allow_hyphen_values = true)]
        ells: String,
        #[arg(long, default_value_t = 16)]
        half_window: usize,
        /// "sym" or "post".
        #[arg(long, default_value = "sym")]
        map: String,
    },
    /// Closed-form complexity report.
    Complexity {
        #[arg(long)]
        arch: Option<String>,
        /// Comma-separated block sizes.
        #[arg(long, default_value = "1,16,1024")]
        block_sizes: String,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let root = cli.out.unwrap_or_else(out_root);
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk_default(),
    };
    match cli.command {
        Command::InitConfig { paper } => {
            let c = if paper {
                ExperimentConfig::paper_default()
            } else {
                ExperimentConfig::desk_default()
            };
            println!("{}", serde_json::to_string_pretty(&c)?);
        }
        Command::Simulate { power, dump_waveform } => {
            commands::simulate(&cfg, &root, power.unwrap_or(cfg.dataset.launch_dbm), dump_waveform)?;
        }
        Command::GenDataset { role } => {
            commands::gen_dataset_cmd(&cfg, &root, role.parse::<Role>()?)?;
        }
        Command::Train { arch } => {
            let kind = arch.map(|a| a.parse::<ArchKind>()).transpose()?;
            commands::train_cmd(&cfg, &root, kind)?;
        }
        Command::Equalize { model, block_n, power } => {
            commands::equalize_cmd(&cfg, &root, &model, block_n, power)?;
        }
        Command::Sweep { arch, models } => {
            commands::sweep_cmd(&cfg, &root, arch.parse::<ArchKind>()?, models)?;
        }
        Command::PowerSweep { model, block_n } => {
            commands::power_sweep_cmd(&cfg, &root, &model, block_n)?;
        }
        Command::Pertcoef { ells, half_window, map } => {
            let ells: Vec<i32> = ells
                .split(',')
                .map(|s| s.trim().parse::<i32>())
                .collect::<std::result::Result<_, _>>()?;
            commands::pertcoef_cmd(&cfg, &root, &ells, half_window, commands::parse_map(&map)?)?;
        }
        Command::Complexity { arch, block_sizes } => {
            let kind = arch.map(|a| a.parse::<ArchKind>()).transpose()?;
            let sizes: Vec<usize> = block_sizes
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()?;
            commands::complexity_cmd(&cfg, &root, kind, &sizes)?;
        }
    }
    Ok(())
}
