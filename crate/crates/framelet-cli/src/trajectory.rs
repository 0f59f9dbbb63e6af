//! Layer-wise Dirichlet energy trajectories for untrained stacks.
//!
//! One CSV per model variant (`gcn`, `framelet`, `eeconv` at each requested
//! ε), long format: one row per layer per analysis pass, carrying the
//! layer's total energy alongside the per-pass framelet energies and
//! ratios.

use std::path::PathBuf;

use framelet::energy::{dirichlet_energy_edge_sum, framelet_energies};
use framelet::frames::{build_system, DilationScale, FilterBank};
use framelet::nn::LayerKind;
use framelet::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::stack::stack_states;
use crate::{ensure_out_dir, load_graph, write_csv};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub model: String,
    pub epsilon: f64,
    pub layer: usize,
    pub total_energy: f64,
    /// `log10` of the total; `-inf` on degenerate (all-zero) layers.
    pub log10_total_energy: f64,
    pub pass_id: String,
    pub pass_energy: f64,
    pub pass_ratio: f64,
    pub degenerate: bool,
}

/// One model variant of the trajectory experiment.
#[derive(Debug, Clone)]
pub struct TrajectoryVariant {
    /// File stem, e.g. `trajectory_eeconv_eps0.1`.
    pub name: String,
    pub rows: Vec<TrajectoryRow>,
}

fn variant_rows(
    cfg: &ExperimentConfig,
    kind: LayerKind,
    label: &str,
    epsilon: f64,
) -> Result<Vec<TrajectoryRow>> {
    let g = load_graph(&cfg.graph, cfg.trajectory.seed)?;
    if g.feature_dim() == 0 {
        return Err(Error::InvalidConfig("trajectory needs a graph with features".into()));
    }
    let gm = framelet::graph::build_matrices(&g)?;
    let sys = build_system(&gm, FilterBank::haar(), &cfg.system_config(DilationScale::Default))?;

    let states = stack_states(
        &gm,
        Some(&sys),
        kind,
        epsilon,
        &g.features,
        cfg.trajectory.max_layers,
        cfg.trajectory.seed,
    )?;

    let mut rows = Vec::new();
    for (layer, h) in states.iter().enumerate() {
        let total = dirichlet_energy_edge_sum(&gm, h)?;
        let report = framelet_energies(&sys, &gm, h)?;
        for (i, csv_row) in report.csv_rows(layer).into_iter().enumerate() {
            rows.push(TrajectoryRow {
                model: label.to_string(),
                epsilon,
                layer,
                total_energy: total,
                log10_total_energy: total.log10(),
                pass_id: csv_row.pass_id,
                pass_energy: report.per_pass[i],
                pass_ratio: report.ratios[i],
                degenerate: report.degenerate,
            });
        }
    }
    Ok(rows)
}

/// Compute every variant: GCN, plain framelet convolution, and EEConv for
/// each configured ε.
pub fn run_energy_trajectory(cfg: &ExperimentConfig) -> Result<Vec<TrajectoryVariant>> {
    let mut variants = vec![
        TrajectoryVariant {
            name: "trajectory_gcn".into(),
            rows: variant_rows(cfg, LayerKind::Gcn, "gcn", 0.0)?,
        },
        TrajectoryVariant {
            name: "trajectory_framelet".into(),
            rows: variant_rows(cfg, LayerKind::Framelet, "framelet", 0.0)?,
        },
    ];
    for &eps in &cfg.trajectory.epsilons {
        variants.push(TrajectoryVariant {
            name: format!("trajectory_eeconv_eps{eps}"),
            rows: variant_rows(cfg, LayerKind::EeConv, "eeconv", eps)?,
        });
    }
    Ok(variants)
}

/// Run and write one CSV per variant; returns the written paths.
pub fn cmd_energy_trajectory(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let variants = run_energy_trajectory(cfg)?;
    ensure_out_dir(&cfg.out_dir)?;
    let mut paths = Vec::new();
    for v in &variants {
        let path = cfg.out_dir.join(format!("{}.csv", v.name));
        write_csv(&path, &v.rows)?;
        paths.push(path);
    }
    Ok(paths)
}
