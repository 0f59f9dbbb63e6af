//! `framelet-cli`: experiment harness for the framelet crate.
//!
//! Exit codes: 0 on success, 1 when the verify command finds a failing
//! invariant, 2 on usage or configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use framelet_cli::config::{ExperimentConfig, ModeArg};
use framelet_cli::{sweep, timing, traingrid, trajectory, transform, verify};

#[derive(Parser)]
#[command(
    name = "framelet-cli",
    version,
    about = "Graph-framelet experiments: energy trajectories, SBM sweeps, training grids, coefficient dumps, invariant verification, timing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; defaults apply for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Replace the running command's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Transform mode for framelet systems.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,

    /// Replace the running command's ε value(s).
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Layer-wise Dirichlet energy of untrained stacks, one CSV per model.
    EnergyTrajectory,
    /// Homophily sweep over SBM graphs: energies and high-pass fractions.
    SbmSweep,
    /// Train GCN and EEConv across depths and seeds; metrics JSON + energy CSV.
    Train,
    /// Framelet coefficient dump and per-pass principal-component projections.
    Transform,
    /// Run every invariant suite and write a pass/fail report.
    Verify,
    /// Wall-clock scaling of decompose/forward over node counts.
    Timing,
}

fn load_config(cli: &Cli) -> framelet::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                framelet::Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
            })?;
            ExperimentConfig::from_json_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
    }
    if let Some(seed) = cli.seed {
        cfg.trajectory.seed = seed;
        cfg.sweep.seeds = vec![seed];
        cfg.train.seeds = vec![seed];
        cfg.transform.seed = seed;
        cfg.verify.seed = seed;
        cfg.timing.seed = seed;
    }
    if let Some(eps) = cli.epsilon {
        cfg.trajectory.epsilons = vec![eps];
        cfg.sweep.epsilon = eps;
        cfg.train.epsilon = eps;
        cfg.verify.epsilon = eps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> framelet::Result<ExitCode> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::EnergyTrajectory => {
            for path in trajectory::cmd_energy_trajectory(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::SbmSweep => {
            for path in sweep::cmd_sbm_sweep(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train => {
            for path in traingrid::cmd_train(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Transform => {
            for path in transform::cmd_transform(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Verify => {
            let (report, path) = verify::cmd_verify(&cfg)?;
            println!("wrote {}", path.display());
            if !report.all_passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Timing => {
            for path in timing::cmd_timing(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
