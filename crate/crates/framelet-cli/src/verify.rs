//! Invariant verification suites with a machine-readable report.
//!
//! Desk-scale re-checks of the properties the library is built around:
//! frame tightness, energy conservation and enhancement, the eigenvalue
//! sandwich, permutation equivariance, gradient correctness, and the
//! layer contraction bound. Failures do not abort the run; they land in
//! the report (and drive the binary's exit code).

use std::path::PathBuf;

use framelet::energy::{contraction_check, framelet_energies, modified_framelet_energies};
use framelet::frames::{build_system, DilationScale, FilterBank, FrameletSystem, SystemConfig};
use framelet::graph::{build_matrices, sbm_generate, Graph, GraphMatrices, SbmConfig};
use framelet::nn::{
    backward, build_augmented_pair, cross_entropy_loss, equivariance_check, gcn_forward,
    glorot_uniform, model_forward, Activation, Gradients, LayerKind, ModelArtifacts, ModelConfig,
    ModelState,
};
use framelet::spectral::eigendecompose;
use framelet::{Error, Result};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{ensure_out_dir, write_json};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub max_residual: f64,
    pub tolerance: f64,
    pub details: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
    pub all_passed: bool,
}

fn random_graph(rng: &mut ChaCha8Rng) -> Result<Graph<f64>> {
    let npb = rng.gen_range(4..=10);
    let p = rng.gen_range(0.4..0.8);
    let q = rng.gen_range(0.1..0.3);
    sbm_generate(&SbmConfig::two_block(npb, p, q, rng.gen()))
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
}

/// Relative conservation residual `|Σᵢ Eᵢ − E(x)| / max(E(x), 1e-30)`.
/// Exposed so mutation tests can feed deliberately inconsistent inputs.
pub fn conservation_residual(
    sys: &FrameletSystem<f64>,
    gm: &GraphMatrices<f64>,
    x: &Array2<f64>,
) -> Result<f64> {
    let report = framelet_energies(sys, gm, x)?;
    let sum: f64 = report.per_pass.iter().sum();
    Ok((sum - report.total).abs() / report.total.max(1e-30))
}

fn exact_config(scale: DilationScale) -> SystemConfig {
    SystemConfig { num_scales: 2, scale, mode: framelet::frames::TransformMode::Exact }
}

fn tightness_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for scale in [DilationScale::Default, DilationScale::KRule, DilationScale::Adapted] {
        for _ in 0..3 {
            let g = random_graph(&mut rng)?;
            let gm = build_matrices(&g)?;
            let sys = build_system(&gm, FilterBank::haar(), &exact_config(scale))?;
            worst = worst.max(sys.tightness_residual(2.0, 1000));
        }
    }
    let tolerance = 1e-10;
    Ok(SuiteResult {
        name: "tightness".into(),
        passed: worst <= tolerance,
        max_residual: worst,
        tolerance,
        details: "max |Σᵢ gᵢ(λ)² − 1| over three scale rules × 3 graphs, 1000-point grid".into(),
    })
}

fn conservation_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let g = random_graph(&mut rng)?;
        let gm = build_matrices(&g)?;
        let sys = build_system(&gm, FilterBank::haar(), &exact_config(DilationScale::Default))?;
        for _ in 0..3 {
            let x = random_signal(&mut rng, gm.num_nodes, 4);
            worst = worst.max(conservation_residual(&sys, &gm, &x)?);
        }
    }
    let tolerance = 1e-8;
    Ok(SuiteResult {
        name: "conservation".into(),
        passed: worst <= tolerance,
        max_residual: worst,
        tolerance,
        details: "relative |Σᵢ Eᵢ − E(x)| over 5 graphs × 3 signals, exact transforms".into(),
    })
}

fn enhancement_suite(seed: u64, epsilon: f64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;

    // d-regular families where the enhancement delta has a closed form.
    let mut regulars: Vec<(Graph<f64>, f64)> = Vec::new();
    for n in 3..=5 {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j, 1.0));
            }
        }
        regulars.push((Graph::new(n, edges, Array2::zeros((n, 2)))?, (n - 1) as f64));
    }
    for n in 4..=6 {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        regulars.push((Graph::new(n, edges, Array2::zeros((n, 2)))?, 2.0));
    }
    for (g, degree) in &regulars {
        let gm = build_matrices(g)?;
        let sys = build_system(&gm, FilterBank::haar(), &exact_config(DilationScale::Default))?;
        let x = random_signal(&mut rng, gm.num_nodes, 3);
        let report = modified_framelet_energies(&sys, &gm, &x, epsilon)?;
        let coeffs = sys.decompose(&x)?;
        let gap = framelet::frames::energy_gap_stats(&coeffs).gap;
        let delta = report.total_modified - report.total;
        let expected = epsilon / (1.0 + degree) * gap;
        worst = worst.max((delta - expected).abs() / expected.abs().max(1.0));
    }

    // Irregular graphs: no closed form, but the delta stays nonnegative.
    let mut min_delta = f64::INFINITY;
    for _ in 0..10 {
        let g = random_graph(&mut rng)?;
        let gm = build_matrices(&g)?;
        let sys = build_system(&gm, FilterBank::haar(), &exact_config(DilationScale::Default))?;
        let x = random_signal(&mut rng, gm.num_nodes, 3);
        let report = modified_framelet_energies(&sys, &gm, &x, epsilon)?;
        min_delta = min_delta.min(report.total_modified - report.total);
    }

    let tolerance = 1e-10;
    Ok(SuiteResult {
        name: "enhancement".into(),
        passed: worst <= tolerance && min_delta >= -1e-12,
        max_residual: worst,
        tolerance,
        details: format!(
            "closed-form delta on regular graphs at ε = {epsilon}; min SBM delta {min_delta:.3e} (must be ≥ -1e-12)"
        ),
    })
}

fn sandwich_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violation = 0.0f64;
    for _ in 0..10 {
        let g = random_graph(&mut rng)?;
        let gm = build_matrices(&g)?;
        let base = eigendecompose(&gm.a_hat)?.eigenvalues;
        for eps in [0.01, 0.1, 0.5] {
            let pair = build_augmented_pair(&gm, eps)?;
            let low = eigendecompose(&pair.a_low)?.eigenvalues;
            let high = eigendecompose(&pair.a_high)?.eigenvalues;
            for k in 0..gm.num_nodes {
                violation = violation.max(low[k] - base[k]).max(base[k] - high[k]);
            }
        }
    }
    let tolerance = 1e-9;
    Ok(SuiteResult {
        name: "sandwich".into(),
        passed: violation <= tolerance,
        max_residual: violation,
        tolerance,
        details: "max λₖ ordering violation over 10 graphs × ε ∈ {0.01, 0.1, 0.5}".into(),
    })
}

fn equivariance_suite(seed: u64) -> Result<SuiteResult> {
    let g = sbm_generate(&SbmConfig::<f64>::two_block(6, 0.5, 0.2, seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE1);
    let n = g.num_nodes;
    let mut worst = 0.0f64;
    for kind in [LayerKind::Gcn, LayerKind::Framelet, LayerKind::EeConv] {
        let config = ModelConfig::<f64>::new(kind, 2, 17);
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            worst = worst.max(equivariance_check(&config, &g, &perm)?);
        }
    }
    let tolerance = 1e-8;
    Ok(SuiteResult {
        name: "equivariance".into(),
        passed: worst <= tolerance,
        max_residual: worst,
        tolerance,
        details: "max logit deviation over 3 layer kinds × 10 node permutations".into(),
    })
}

fn gradcheck_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6C);
    let g = Graph::new(
        6,
        vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0), (0, 5, 1.0)],
        Array2::from_shape_fn((6, 3), |_| rng.gen_range(-1.0..1.0)),
    )?;
    let labels = vec![0usize, 1, 0, 1, 1, 0];
    let mask = vec![true; 6];
    let step = 1e-5;
    let mut worst = 0.0f64;

    for kind in [LayerKind::Gcn, LayerKind::Framelet, LayerKind::EeConv] {
        let mut config = ModelConfig::<f64>::new(kind, 2, 0x11);
        config.hidden_dim = 4;
        let art = ModelArtifacts::build(build_matrices(&g)?, &config)?;
        let mut state = ModelState::init(&config, 3, 2, art.num_passes())?;
        let (logits, trace) = model_forward(&state, &config, &art, &g.features, None)?;
        let (_, dlogits) = cross_entropy_loss(&logits, &labels, &mask)?;
        let grads = backward(&state, &config, &art, &g.features, &trace, &dlogits)?;

        let loss_of = |state: &ModelState<f64>| -> Result<f64> {
            let (lg, _) = model_forward(state, &config, &art, &g.features, None)?;
            Ok(cross_entropy_loss(&lg, &labels, &mask)?.0)
        };
        worst = worst.max(max_fd_error(&mut state, &grads, step, loss_of)?);
    }
    let tolerance = 1e-4;
    Ok(SuiteResult {
        name: "gradcheck".into(),
        passed: worst <= tolerance,
        max_residual: worst,
        tolerance,
        details: "central finite differences over every parameter, all three layer kinds".into(),
    })
}

enum Slot {
    Proj,
    Layer(usize, usize),
    Readout,
    Bias,
}

fn tensor_mut<'a>(state: &'a mut ModelState<f64>, slot: &Slot) -> &'a mut Array2<f64> {
    match slot {
        Slot::Proj => &mut state.input_proj,
        Slot::Layer(l, i) => &mut state.layers[*l][*i],
        Slot::Readout => &mut state.readout,
        Slot::Bias => &mut state.readout_bias,
    }
}

/// Worst relative error between `grads` and central differences of
/// `loss_of` across every parameter entry of `state`. The state is
/// restored after each probe.
fn max_fd_error(
    state: &mut ModelState<f64>,
    grads: &Gradients<f64>,
    step: f64,
    loss_of: impl Fn(&ModelState<f64>) -> Result<f64>,
) -> Result<f64> {
    let mut slots = vec![Slot::Proj];
    for l in 0..state.layers.len() {
        for i in 0..state.layers[l].len() {
            slots.push(Slot::Layer(l, i));
        }
    }
    slots.push(Slot::Readout);
    slots.push(Slot::Bias);

    let mut worst = 0.0f64;
    for slot in &slots {
        let analytic = match slot {
            Slot::Proj => &grads.input_proj,
            Slot::Layer(l, i) => &grads.layers[*l][*i],
            Slot::Readout => &grads.readout,
            Slot::Bias => &grads.readout_bias,
        };
        let (rows, cols) = (analytic.nrows(), analytic.ncols());
        for r in 0..rows {
            for c in 0..cols {
                let orig = tensor_mut(state, slot)[(r, c)];
                tensor_mut(state, slot)[(r, c)] = orig + step;
                let lp = loss_of(state)?;
                tensor_mut(state, slot)[(r, c)] = orig - step;
                let lm = loss_of(state)?;
                tensor_mut(state, slot)[(r, c)] = orig;
                let fd = (lp - lm) / (2.0 * step);
                let an = analytic[(r, c)];
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
            }
        }
    }
    Ok(worst)
}

fn contraction_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0);
    let mut worst = f64::NEG_INFINITY;
    let mut trials = 0;
    while trials < 25 {
        // The bound needs λ₂(Â) to dominate |λ_min|; dense well-connected
        // SBM draws provide that, others are redrawn.
        let npb = rng.gen_range(5..=10);
        let p = rng.gen_range(0.55..0.85);
        let g = sbm_generate(&SbmConfig::<f64>::two_block(npb, p, p, rng.gen()))?;
        let gm = build_matrices(&g)?;
        if gm.num_components() != 1 {
            continue;
        }
        let eig = eigendecompose(&gm.a_hat)?;
        let lambda2 = eig.eigenvalues[gm.num_nodes - 2];
        let lambda_min = eig.eigenvalues[0];
        if lambda2 < lambda_min.abs() {
            continue;
        }
        trials += 1;
        let h = random_signal(&mut rng, gm.num_nodes, 4);
        let w: Array2<f64> = glorot_uniform(4, 4, &mut rng);
        let out = gcn_forward(&gm, &h, &w, Activation::Relu)?;
        let check = contraction_check(&gm, &w, &h, &out)?;
        worst = worst.max(check.lhs - check.rhs);
    }
    let tolerance = 1e-9;
    Ok(SuiteResult {
        name: "contraction".into(),
        passed: worst <= tolerance,
        max_residual: worst,
        tolerance,
        details: "max d_ℳ(out) − s·λ₂·d_ℳ(in) over 25 ReLU GCN layer evaluations".into(),
    })
}

/// Run every suite. Config problems (negative ε) error out before any
/// suite runs; suite failures are report entries, not errors.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    if cfg.verify.epsilon < 0.0 {
        return Err(Error::InvalidConfig("verify.epsilon must be nonnegative".into()));
    }
    let seed = cfg.verify.seed;
    let suites = vec![
        tightness_suite(seed)?,
        conservation_suite(seed)?,
        enhancement_suite(seed, cfg.verify.epsilon)?,
        sandwich_suite(seed)?,
        equivariance_suite(seed)?,
        gradcheck_suite(seed)?,
        contraction_suite(seed)?,
    ];
    let all_passed = suites.iter().all(|s| s.passed);
    Ok(VerifyReport { suites, all_passed })
}

/// Run, print one line per suite, and write `verify_report.json`.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<(VerifyReport, PathBuf)> {
    let report = run_verify(cfg)?;
    ensure_out_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("verify_report.json");
    write_json(&path, &report)?;
    for s in &report.suites {
        println!(
            "{}: {} (max residual {:.3e}, tolerance {:.1e})",
            s.name,
            if s.passed { "PASS" } else { "FAIL" },
            s.max_residual,
            s.tolerance
        );
    }
    Ok((report, path))
}
