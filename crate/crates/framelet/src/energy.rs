//! Dirichlet energy: classical, per-framelet-pass, and ε-modified variants,
//! plus the null-space machinery used to measure over-smoothing
//! (orthogonal distance to the Laplacian kernel and the layer contraction
//! bound).

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{FrameletCoefficients, FrameletSystem};
use crate::graph::GraphMatrices;
use crate::spectral::eigendecompose;
use crate::Scalar;

/// Below this total energy, ratios are clamped and flagged degenerate.
pub const RATIO_CLAMP: f64 = 1e-12;

/// Energies of one signal under one framelet system, optionally ε-modified.
///
/// `per_pass[i]` is `trace((𝒲ᵢx)ᵀ Δ̃ (𝒲ᵢx))` in canonical pass order;
/// the modified entries use `Δ̃ + εD̃⁻¹` for the low pass and `Δ̃ − εD̃⁻¹`
/// for every high pass. `ratios` are per-pass fractions of `total`, with
/// the denominator clamped at [`RATIO_CLAMP`]; `degenerate` marks reports
/// where the clamp bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport<F> {
    pub total: F,
    pub per_pass: Vec<F>,
    pub per_pass_modified: Vec<F>,
    pub total_modified: F,
    pub ratios: Vec<F>,
    pub epsilon: F,
    pub degenerate: bool,
}

/// One CSV record of an [`EnergyReport`]; schema is fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyCsvRow<F> {
    pub layer: usize,
    pub pass_id: String,
    pub energy: F,
    pub energy_modified: F,
    pub ratio: F,
    pub epsilon: F,
}

impl<F: Scalar> EnergyReport<F> {
    /// One row per pass, labeled `g0`, `g1`, ... to match the transform
    /// order.
    pub fn csv_rows(&self, layer: usize) -> Vec<EnergyCsvRow<F>> {
        (0..self.per_pass.len())
            .map(|i| EnergyCsvRow {
                layer,
                pass_id: format!("g{i}"),
                energy: self.per_pass[i],
                energy_modified: self.per_pass_modified[i],
                ratio: self.ratios[i],
                epsilon: self.epsilon,
            })
            .collect()
    }
}

fn check_rows<F: Scalar>(gm: &GraphMatrices<F>, x: &Array2<F>) -> Result<()> {
    if x.nrows() != gm.num_nodes {
        return Err(Error::ShapeMismatch(format!(
            "signal has {} rows for a graph of {} nodes",
            x.nrows(),
            gm.num_nodes
        )));
    }
    Ok(())
}

/// Classical Dirichlet energy `trace(xᵀ Δ̃ x)` (quadratic-form route).
pub fn dirichlet_energy<F: Scalar>(gm: &GraphMatrices<F>, x: &Array2<F>) -> Result<F> {
    check_rows(gm, x)?;
    let lx = gm.laplacian.dot(x);
    Ok(x.iter().zip(lx.iter()).map(|(&a, &b)| a * b).sum())
}

/// The same energy as an explicit sum over edges,
/// `Σ_{(i,j)∈E} w_ij ‖x_i/√d̃_i − x_j/√d̃_j‖²`.
///
/// Nonnegative term by term, so it is immune to the cancellation that can
/// push the quadratic form slightly negative on near-converged signals;
/// also the independent oracle the quadratic route is tested against.
pub fn dirichlet_energy_edge_sum<F: Scalar>(gm: &GraphMatrices<F>, x: &Array2<F>) -> Result<F> {
    check_rows(gm, x)?;
    let inv_sqrt: Array1<F> = gm.deg_tilde.mapv(|d| F::one() / d.sqrt());
    let mut acc = F::zero();
    for &(i, j, w) in &gm.edges {
        let (xi, xj) = (x.row(i), x.row(j));
        let mut e = F::zero();
        for (&a, &b) in xi.iter().zip(xj.iter()) {
            let diff = a * inv_sqrt[i] - b * inv_sqrt[j];
            e = e + diff * diff;
        }
        acc = acc + w * e;
    }
    Ok(acc)
}

fn report_from_blocks<F: Scalar>(
    gm: &GraphMatrices<F>,
    total: F,
    coeffs: &FrameletCoefficients<F>,
    epsilon: F,
) -> Result<EnergyReport<F>> {
    let inv_deg: Array1<F> = gm.deg_tilde.mapv(|d| F::one() / d);
    let mut per_pass = Vec::with_capacity(coeffs.num_passes());
    let mut per_pass_modified = Vec::with_capacity(coeffs.num_passes());
    for (idx, block) in coeffs.passes().enumerate() {
        let base = dirichlet_energy(gm, block)?;
        // trace(cᵀ D̃⁻¹ c): the ε-correction mass of this pass.
        let mut corr = F::zero();
        for (i, row) in block.rows().into_iter().enumerate() {
            let sq: F = row.iter().map(|&v| v * v).sum();
            corr = corr + sq * inv_deg[i];
        }
        let modified = if idx == 0 { base + epsilon * corr } else { base - epsilon * corr };
        per_pass.push(base);
        per_pass_modified.push(modified);
    }
    let total_modified = per_pass_modified.iter().copied().sum();
    let clamp = F::c(RATIO_CLAMP);
    let degenerate = total < clamp;
    let denom = total.max(clamp);
    let ratios = per_pass.iter().map(|&e| e / denom).collect();
    Ok(EnergyReport {
        total,
        per_pass,
        per_pass_modified,
        total_modified,
        ratios,
        epsilon,
        degenerate,
    })
}

/// Per-pass framelet Dirichlet energies (the ε = 0 report).
///
/// In exact mode the passes conserve energy: `Σᵢ Eᵢ = E(x)` up to
/// round-off, which is the decomposition-invariance property of the tight
/// system.
pub fn framelet_energies<F: Scalar>(
    sys: &FrameletSystem<F>,
    gm: &GraphMatrices<F>,
    x: &Array2<F>,
) -> Result<EnergyReport<F>> {
    modified_framelet_energies(sys, gm, x, F::zero())
}

/// Per-pass energies under the ε-modified Laplacians: `Δ̃ + εD̃⁻¹` for the
/// low pass, `Δ̃ − εD̃⁻¹` for the highs. The enhancement delta is
/// `total_modified − total`; on a d-regular graph it equals
/// `ε/(1+d) · (‖V₀‖² − Σ‖Wⱼʳ‖²)` and is therefore nonnegative.
pub fn modified_framelet_energies<F: Scalar>(
    sys: &FrameletSystem<F>,
    gm: &GraphMatrices<F>,
    x: &Array2<F>,
    epsilon: F,
) -> Result<EnergyReport<F>> {
    check_rows(gm, x)?;
    let total = dirichlet_energy(gm, x)?;
    let coeffs = sys.decompose(x)?;
    report_from_blocks(gm, total, &coeffs, epsilon)
}

/// Orthonormal basis of the null space of `Δ̃`: one column per connected
/// component, supported on the component with entries proportional to
/// `√d̃_i`.
#[derive(Debug, Clone)]
pub struct SubspaceBasis<F: Scalar> {
    pub basis: Array2<F>,
}

pub fn null_space_basis<F: Scalar>(gm: &GraphMatrices<F>) -> SubspaceBasis<F> {
    let comp = gm.components();
    let m = comp.iter().max().map(|&c| c + 1).unwrap_or(0);
    let mut basis = Array2::zeros((gm.num_nodes, m));
    for (i, &c) in comp.iter().enumerate() {
        basis[(i, c)] = gm.deg_tilde[i].sqrt();
    }
    for mut col in basis.columns_mut() {
        let norm = col.iter().map(|&v| v * v).sum::<F>().sqrt();
        if norm > F::zero() {
            col.mapv_inplace(|v| v / norm);
        }
    }
    SubspaceBasis { basis }
}

/// Distance `d_ℳ(x) = ‖x − B Bᵀ x‖_F` from the signal to the smooth
/// subspace spanned channel-wise by the null-space basis.
pub fn subspace_distance<F: Scalar>(b: &SubspaceBasis<F>, x: &Array2<F>) -> Result<F> {
    if x.nrows() != b.basis.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "signal has {} rows for a basis over {} nodes",
            x.nrows(),
            b.basis.nrows()
        )));
    }
    let proj = b.basis.dot(&b.basis.t().dot(x));
    let resid = x - &proj;
    Ok(resid.iter().map(|&v| v * v).sum::<F>().sqrt())
}

/// Result of one contraction-bound evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionCheck<F> {
    /// `d_ℳ(h_out)`.
    pub lhs: F,
    /// `s_l · λ · d_ℳ(h_in)`.
    pub rhs: F,
    pub satisfied: bool,
}

/// Largest singular value by power iteration on `WᵀW` (deterministic
/// seeded start, tight tolerance).
pub fn top_singular_value<F: Scalar>(w: &Array2<F>) -> F {
    let (r, c) = (w.nrows(), w.ncols());
    if r == 0 || c == 0 {
        return F::zero();
    }
    let gram = if c <= r { w.t().dot(w) } else { w.dot(&w.t()) };
    let n = gram.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5157);
    let mut v: Array1<F> = Array1::from_iter((0..n).map(|_| F::std_normal(&mut rng)));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let tol = F::epsilon() * F::c(4.0);
    let mut est = F::zero();
    for _ in 0..10_000 {
        let gv = gram.dot(&v);
        let next = gv.dot(&gv).sqrt();
        if next <= F::min_positive_value() {
            return F::zero();
        }
        v = gv.mapv(|x| x / next);
        if (next - est).abs() <= tol * next.max(F::one()) {
            est = next;
            break;
        }
        est = next;
    }
    est.max(F::zero()).sqrt()
}

/// Check the one-layer contraction bound
/// `d_ℳ(h_out) ≤ s_l · λ₂(Â) · d_ℳ(h_in) + 1e-9`, with `s_l` the largest
/// singular value of the layer weights and `λ₂` the second largest
/// eigenvalue of `Â`. The caller supplies `h_out` as produced by the layer.
pub fn contraction_check<F: Scalar>(
    gm: &GraphMatrices<F>,
    weights: &Array2<F>,
    h_in: &Array2<F>,
    h_out: &Array2<F>,
) -> Result<ContractionCheck<F>> {
    check_rows(gm, h_in)?;
    check_rows(gm, h_out)?;
    if h_in.ncols() != weights.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "weights are {}x{} for inputs with {} channels",
            weights.nrows(),
            weights.ncols(),
            h_in.ncols()
        )));
    }
    if gm.num_nodes < 2 {
        return Err(Error::GraphData("contraction bound needs at least 2 nodes".into()));
    }
    let basis = null_space_basis(gm);
    let lhs = subspace_distance(&basis, h_out)?;
    let s_l = top_singular_value(weights);
    let eig = eigendecompose(&gm.a_hat)?;
    let lambda2 = eig.eigenvalues[eig.eigenvalues.len() - 2];
    let rhs = s_l * lambda2 * subspace_distance(&basis, h_in)?;
    Ok(ContractionCheck { lhs, rhs, satisfied: lhs <= rhs + F::c(1e-9) })
}
