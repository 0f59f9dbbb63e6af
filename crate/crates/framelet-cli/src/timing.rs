//! Wall-clock scaling of the framelet transform.
//!
//! Times system build, decomposition, and one EEConv forward at each
//! requested node count, then fits the log-log slope of decompose time vs
//! `N`. With dense exact transforms the decompose cost is `O(N²d)`, so the
//! slope lands near 2.

use std::path::PathBuf;
use std::time::Instant;

use framelet::frames::{build_system, DilationScale, FilterBank};
use framelet::graph::{build_matrices, sbm_generate, SbmConfig};
use framelet::nn::{build_augmented_pair, eeconv_forward, glorot_uniform, Activation};
use framelet::Result;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModeArg};
use crate::{ensure_out_dir, write_csv, write_json};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRow {
    pub num_nodes: usize,
    pub mode: String,
    pub build_seconds: f64,
    pub decompose_seconds: f64,
    pub forward_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingSummary {
    /// Least-squares slope of `ln(decompose_seconds)` against `ln(N)`;
    /// absent (and flagged) when fewer than two node counts ran.
    pub decompose_slope: Option<f64>,
    pub single_point: bool,
}

/// Median of repeated wall-clock samples of `f`, each sample averaging
/// `inner` consecutive runs to stay above timer resolution.
fn median_seconds(repeats: usize, inner: usize, mut f: impl FnMut()) -> f64 {
    let mut samples: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..inner {
                f();
            }
            start.elapsed().as_secs_f64() / inner as f64
        })
        .collect();
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    samples[samples.len() / 2]
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(cov / var)
}

/// Time every configured node count.
pub fn run_timing(cfg: &ExperimentConfig) -> Result<(Vec<TimingRow>, TimingSummary)> {
    let t = &cfg.timing;
    let mode_label = match cfg.mode {
        ModeArg::Exact => "exact",
        ModeArg::Chebyshev => "chebyshev",
    };
    let mut rows = Vec::new();
    let mut sizes = Vec::new();
    let mut times = Vec::new();
    for &n in &t.node_counts {
        let npb = (n / 2).max(1);
        let g = sbm_generate(&SbmConfig::<f64>::two_block(npb, 0.3, 0.05, t.seed))?;
        let gm = build_matrices(&g)?;
        let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
        let x: Array2<f64> =
            Array2::from_shape_fn((gm.num_nodes, t.feature_dim), |_| rng.gen_range(-1.0..1.0));

        let start = Instant::now();
        let sys =
            build_system(&gm, FilterBank::haar(), &cfg.system_config(DilationScale::Default))?;
        let build_seconds = start.elapsed().as_secs_f64();

        // Keep each sample above ~1 ms even at small N.
        let inner = ((512 * 512) / (gm.num_nodes * gm.num_nodes)).max(1);
        let decompose_seconds = median_seconds(t.repeats, inner, || {
            let _ = sys.decompose(&x).expect("decompose after successful build");
        });

        let pair = build_augmented_pair(&gm, 0.1)?;
        let weights: Vec<Array2<f64>> =
            (0..sys.num_passes()).map(|_| glorot_uniform(t.feature_dim, t.feature_dim, &mut rng)).collect();
        let forward_seconds = median_seconds(t.repeats, inner, || {
            let _ = eeconv_forward(&sys, &pair, &x, &weights, Activation::Relu)
                .expect("forward on matching shapes");
        });

        sizes.push(gm.num_nodes as f64);
        times.push(decompose_seconds);
        rows.push(TimingRow {
            num_nodes: gm.num_nodes,
            mode: mode_label.into(),
            build_seconds,
            decompose_seconds,
            forward_seconds,
        });
    }
    let decompose_slope = log_log_slope(&sizes, &times);
    let summary = TimingSummary { decompose_slope, single_point: sizes.len() < 2 };
    Ok((rows, summary))
}

/// Run and write `timing.csv` plus `timing_summary.json`.
pub fn cmd_timing(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let (rows, summary) = run_timing(cfg)?;
    ensure_out_dir(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join("timing.csv");
    let json_path = cfg.out_dir.join("timing_summary.json");
    write_csv(&csv_path, &rows)?;
    write_json(&json_path, &summary)?;
    match summary.decompose_slope {
        Some(slope) => println!("decompose log-log slope: {slope:.3}"),
        None => println!("decompose log-log slope: omitted (single node count)"),
    }
    Ok(vec![csv_path, json_path])
}
