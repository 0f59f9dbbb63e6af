//! Coefficient dump and per-pass principal-component projections.
//!
//! Writes the full framelet decomposition of the graph features as JSON,
//! plus a CSV with one scalar per node per pass: the projection of that
//! pass's coefficient block onto its first principal component (power
//! iteration on the centered covariance, sign fixed like the
//! eigendecomposition's).

use std::path::PathBuf;

use framelet::frames::{build_system, coefficients_to_json, DilationScale, FilterBank};
use framelet::graph::build_matrices;
use framelet::{Error, Result};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{ensure_out_dir, load_graph, write_csv};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub pass_id: String,
    pub node: usize,
    pub projection: f64,
}

/// First principal component of the rows of `block`.
///
/// Returns the per-row projection onto the top eigenvector of the sample
/// covariance `XcᵀXc/(n−1)` of the column-centered data, together with that
/// top eigenvalue (the projection's sample variance). Degenerate inputs
/// (fewer than two rows, or zero covariance) project to zeros.
pub fn principal_projection(block: &Array2<f64>) -> (Array1<f64>, f64) {
    let (n, d) = (block.nrows(), block.ncols());
    if n < 2 || d == 0 {
        return (Array1::zeros(n), 0.0);
    }
    let means = block.mean_axis(ndarray::Axis(0)).expect("n ≥ 2");
    let centered = block - &means.broadcast((n, d)).expect("row broadcast");
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(0x50CA);
    let mut v = Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0f64));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut eigenvalue = 0.0;
    for _ in 0..10_000 {
        let w = cov.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm < 1e-300 {
            // Constant columns: covariance annihilates everything.
            return (Array1::zeros(n), 0.0);
        }
        let next = w.mapv(|x| x / norm);
        let drift = (&next - &v).iter().map(|x| x.abs()).fold(0.0, f64::max);
        v = next;
        eigenvalue = v.dot(&cov.dot(&v));
        if drift <= 1e-14 {
            break;
        }
    }
    // Deterministic sign: largest-magnitude loading positive.
    let lead = v.iter().fold(0.0f64, |acc, &x| if x.abs() > acc.abs() { x } else { acc });
    if lead < 0.0 {
        v.mapv_inplace(|x| -x);
    }
    (centered.dot(&v), eigenvalue)
}

/// Decompose the graph features and project every pass.
pub fn run_transform(cfg: &ExperimentConfig) -> Result<(String, Vec<ProjectionRow>)> {
    let g = load_graph(&cfg.graph, cfg.transform.seed)?;
    if g.feature_dim() == 0 {
        return Err(Error::InvalidConfig("transform needs a graph with features".into()));
    }
    let gm = build_matrices(&g)?;
    let sys = build_system(&gm, FilterBank::haar(), &cfg.system_config(DilationScale::Default))?;
    let coeffs = sys.decompose(&g.features)?;
    let dump = coefficients_to_json(&sys, &coeffs)?;

    let labels = sys.response_labels();
    let mut rows = Vec::new();
    for (i, block) in coeffs.passes().enumerate() {
        let (proj, _) = principal_projection(block);
        for (node, &value) in proj.iter().enumerate() {
            rows.push(ProjectionRow { pass_id: labels[i].clone(), node, projection: value });
        }
    }
    Ok((dump, rows))
}

/// Run and write `coefficients.json` plus `projection.csv`.
pub fn cmd_transform(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let (dump, rows) = run_transform(cfg)?;
    ensure_out_dir(&cfg.out_dir)?;
    let coeff_path = cfg.out_dir.join("coefficients.json");
    let proj_path = cfg.out_dir.join("projection.csv");
    std::fs::write(&coeff_path, dump).map_err(|e| {
        Error::InvalidConfig(format!("cannot write {}: {e}", coeff_path.display()))
    })?;
    write_csv(&proj_path, &rows)?;
    Ok(vec![coeff_path, proj_path])
}
