//! Experiment harness around the `framelet` crate.
//!
//! Each submodule implements one CLI subcommand as a plain function pair: a
//! `run_*` that computes rows or a report, and a `cmd_*` that also writes
//! the CSV/JSON artifacts. The split keeps every experiment callable (and
//! assertable) from integration tests without touching the filesystem
//! layout the binary uses.
//!
//! All numeric work is double precision; outputs are deterministic given
//! the seeds in [`config::ExperimentConfig`], except for wall-clock columns
//! in the timing command.

use std::fs;
use std::path::{Path, PathBuf};

use framelet::graph::{sbm_generate, Graph, SbmConfig};
use framelet::{Error, Result};
use serde::Serialize;

pub mod config;
pub mod stack;
pub mod sweep;
pub mod timing;
pub mod traingrid;
pub mod trajectory;
pub mod transform;
pub mod verify;

use config::GraphSource;

/// Materialize the input graph: from a JSON file when `graph_path` is set,
/// otherwise a fresh two-block SBM draw for `seed`.
pub fn load_graph(source: &GraphSource, seed: u64) -> Result<Graph<f64>> {
    match &source.graph_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
            Graph::from_json_str(&text)
        }
        None => sbm_generate(&SbmConfig::two_block(
            source.nodes_per_block,
            source.p_intra,
            source.q_inter,
            seed,
        )),
    }
}

/// Create the output directory (and parents) if needed.
pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidConfig(format!("cannot create {}: {e}", dir.display())))
}

/// Serialize rows to a CSV file with a header row; byte-stable for a fixed
/// row sequence.
pub fn write_csv<T: Serialize>(path: &PathBuf, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::InvalidConfig(format!("csv: {e}")))?;
    }
    let bytes =
        w.into_inner().map_err(|e| Error::InvalidConfig(format!("csv flush: {e}")))?;
    fs::write(path, bytes)
        .map_err(|e| Error::InvalidConfig(format!("cannot write {}: {e}", path.display())))
}

/// Write pretty JSON to a file.
pub fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text)
        .map_err(|e| Error::InvalidConfig(format!("cannot write {}: {e}", path.display())))
}

/// Sample mean and (n−1)-normalized standard deviation; std is 0 for a
/// single sample.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}
