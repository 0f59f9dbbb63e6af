//! Classification grid: GCN vs EEConv across depths, averaged over seeds.
//!
//! Each cell trains one model on one labeled, split graph and reports the
//! accuracies of the best-validation state. Artifacts: a metrics JSON with
//! per-cell results and per-(kind, depth) aggregates, plus a long-format
//! CSV of per-layer energy reports recorded during the first seed's run of
//! every cell.

use std::path::PathBuf;

use framelet::graph::{assign_split, build_matrices, Graph, Split};
use framelet::nn::{
    accuracy, model_forward, train, LayerKind, ModelArtifacts, ModelConfig, ModelState,
    TrainConfig,
};
use framelet::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModeArg};
use crate::{ensure_out_dir, load_graph, mean_std, write_csv, write_json};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainCell {
    pub kind: String,
    pub depth: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummaryRow {
    pub kind: String,
    pub depth: usize,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub mean_train_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainGridReport {
    pub cells: Vec<TrainCell>,
    pub summary: Vec<TrainSummaryRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainEnergyRow {
    pub kind: String,
    pub depth: usize,
    pub epoch: usize,
    pub layer: usize,
    pub pass_id: String,
    pub energy: f64,
    pub energy_modified: f64,
    pub ratio: f64,
    pub epsilon: f64,
}

fn kind_label(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Gcn => "gcn",
        LayerKind::Framelet => "framelet",
        LayerKind::EeConv => "eeconv",
    }
}

fn cell_graph(cfg: &ExperimentConfig, seed: u64) -> Result<Graph<f64>> {
    let mut g = load_graph(&cfg.graph, seed)?;
    if g.labels.is_none() {
        return Err(Error::GraphData("training needs a labeled graph".into()));
    }
    if g.split.is_none() {
        if cfg.graph.graph_path.is_some() {
            return Err(Error::GraphData(
                "training needs a graph with a train/val/test split".into(),
            ));
        }
        assign_split(&mut g, cfg.train.train_frac, cfg.train.val_frac, seed.wrapping_add(1))?;
    }
    Ok(g)
}

fn model_config(cfg: &ExperimentConfig, kind: LayerKind, depth: usize, seed: u64) -> ModelConfig<f64> {
    let mut mc = ModelConfig::new(kind, depth, seed);
    mc.hidden_dim = cfg.train.hidden_dim;
    mc.epsilon = cfg.train.epsilon;
    mc.dropout_rate = cfg.train.dropout_rate;
    mc.framelet_mode = match cfg.mode {
        ModeArg::Exact => framelet::frames::TransformMode::Exact,
        ModeArg::Chebyshev => {
            framelet::frames::TransformMode::Chebyshev { degree: cfg.chebyshev_degree }
        }
    };
    mc
}

/// Accuracies of a state on all three splits.
fn evaluate(
    g: &Graph<f64>,
    mc: &ModelConfig<f64>,
    state: &ModelState<f64>,
) -> Result<(f64, f64, f64)> {
    let art = ModelArtifacts::build(build_matrices(g)?, mc)?;
    let (logits, _) = model_forward(state, mc, &art, &g.features, None)?;
    let labels = g.labels.as_ref().expect("checked by caller");
    Ok((
        accuracy(&logits, labels, &g.split_mask(Split::Train)?),
        accuracy(&logits, labels, &g.split_mask(Split::Val)?),
        accuracy(&logits, labels, &g.split_mask(Split::Test)?),
    ))
}

/// Run the full grid: every (kind, depth, seed) cell.
pub fn run_train_grid(
    cfg: &ExperimentConfig,
) -> Result<(TrainGridReport, Vec<TrainEnergyRow>)> {
    let kinds = [LayerKind::Gcn, LayerKind::EeConv];
    let mut cells = Vec::new();
    let mut energy_rows = Vec::new();

    for kind in kinds {
        for &depth in &cfg.train.depths {
            for (si, &seed) in cfg.train.seeds.iter().enumerate() {
                let g = cell_graph(cfg, seed)?;
                let mc = model_config(cfg, kind, depth, seed);
                let tc = TrainConfig {
                    lr: cfg.train.lr,
                    epochs: cfg.train.epochs,
                    weight_decay: cfg.train.weight_decay,
                    record_energy: cfg.train.record_energy && si == 0,
                    ..TrainConfig::default()
                };
                let result = train(&g, &mc, &tc)?;
                let (train_acc, val_acc, test_acc) = evaluate(&g, &mc, &result.state)?;
                cells.push(TrainCell {
                    kind: kind_label(kind).into(),
                    depth,
                    seed,
                    final_loss: result.history.last().map(|m| m.loss).unwrap_or(f64::NAN),
                    train_acc,
                    val_acc,
                    test_acc,
                });
                for h in &result.energy_history {
                    for (layer, report) in h.reports.iter().enumerate() {
                        for row in report.csv_rows(layer) {
                            energy_rows.push(TrainEnergyRow {
                                kind: kind_label(kind).into(),
                                depth,
                                epoch: h.epoch,
                                layer: row.layer,
                                pass_id: row.pass_id,
                                energy: row.energy,
                                energy_modified: row.energy_modified,
                                ratio: row.ratio,
                                epsilon: row.epsilon,
                            });
                        }
                    }
                }
            }
        }
    }

    let mut summary = Vec::new();
    for kind in kinds {
        for &depth in &cfg.train.depths {
            let of_cell: Vec<&TrainCell> = cells
                .iter()
                .filter(|c| c.kind == kind_label(kind) && c.depth == depth)
                .collect();
            let tests: Vec<f64> = of_cell.iter().map(|c| c.test_acc).collect();
            let trains: Vec<f64> = of_cell.iter().map(|c| c.train_acc).collect();
            let (mean_test_acc, std_test_acc) = mean_std(&tests);
            let (mean_train_acc, _) = mean_std(&trains);
            summary.push(TrainSummaryRow {
                kind: kind_label(kind).into(),
                depth,
                mean_test_acc,
                std_test_acc,
                mean_train_acc,
            });
        }
    }
    Ok((TrainGridReport { cells, summary }, energy_rows))
}

/// Run and write `train_metrics.json` plus `train_energy.csv`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let (report, energy_rows) = run_train_grid(cfg)?;
    ensure_out_dir(&cfg.out_dir)?;
    let metrics = cfg.out_dir.join("train_metrics.json");
    let energy = cfg.out_dir.join("train_energy.csv");
    write_json(&metrics, &report)?;
    write_csv(&energy, &energy_rows)?;
    Ok(vec![metrics, energy])
}
