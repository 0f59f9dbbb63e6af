//! Tight framelet systems on graphs: filter banks, dilation scales, the
//! exact and Chebyshev transform paths, decomposition/reconstruction, and
//! low/high energy-gap statistics.
//!
//! The default system is the two-scale Haar construction whose responses
//! are `g0(λ) = cos(λ/8)cos(λ/16)`, `g1(λ) = sin(λ/16)`,
//! `g2(λ) = sin(λ/8)cos(λ/16)`; they form a partition of unity in square,
//! which is what makes decompose/reconstruct an exact round trip.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphMatrices;
use crate::spectral::{
    chebyshev_fit, eigendecompose, lambda_max_estimate, ChebyshevFilter, EigenDecomposition,
};
use crate::Scalar;

/// Shared scalar response closure.
pub type ScalarFn<F> = Arc<dyn Fn(F) -> F + Send + Sync>;

/// A filter bank: one low-pass `â` and `n ≥ 1` high-pass `b̂⁽ʳ⁾` scalar
/// filters. Tightness (`â² + Σ b̂ᵣ² = 1`) is what the framelet construction
/// needs; [`FilterBank::tightness_residual`] measures it.
#[derive(Clone)]
pub struct FilterBank<F: Scalar> {
    pub name: String,
    a_hat: ScalarFn<F>,
    b_hats: Vec<ScalarFn<F>>,
}

impl<F: Scalar> fmt::Debug for FilterBank<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterBank")
            .field("name", &self.name)
            .field("num_high", &self.b_hats.len())
            .finish()
    }
}

impl<F: Scalar> FilterBank<F> {
    pub fn new(name: impl Into<String>, a_hat: ScalarFn<F>, b_hats: Vec<ScalarFn<F>>) -> Result<Self> {
        if b_hats.is_empty() {
            return Err(Error::InvalidConfig("filter bank needs at least one high-pass".into()));
        }
        Ok(Self { name: name.into(), a_hat, b_hats })
    }

    /// The Haar bank: `â(ξ) = cos(ξ/2)`, `b̂(ξ) = sin(ξ/2)`.
    pub fn haar() -> Self {
        let half = F::c(0.5);
        Self {
            name: "haar".into(),
            a_hat: Arc::new(move |xi: F| (xi * half).cos()),
            b_hats: vec![Arc::new(move |xi: F| (xi * half).sin())],
        }
    }

    pub fn num_high(&self) -> usize {
        self.b_hats.len()
    }

    pub fn a_hat(&self, xi: F) -> F {
        (self.a_hat)(xi)
    }

    /// `r` is zero-based here.
    pub fn b_hat(&self, r: usize, xi: F) -> F {
        (self.b_hats[r])(xi)
    }

    /// Max of `|â(ξ)² + Σ b̂ᵣ(ξ)² − 1|` over a uniform grid on `[0, π]`.
    pub fn tightness_residual(&self, grid: usize) -> F {
        let mut worst = F::zero();
        for k in 0..grid {
            let xi = F::c(PI * k as f64 / (grid - 1) as f64);
            let mut s = self.a_hat(xi).powi(2);
            for r in 0..self.num_high() {
                s = s + self.b_hat(r, xi).powi(2);
            }
            worst = worst.max((s - F::one()).abs());
        }
        worst
    }
}

/// How the Laplacian spectrum is mapped into the filters' argument
/// `θ = λ / 2^K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DilationScale {
    /// `K = 2`, reproducing the concrete two-scale Haar responses above.
    Default,
    /// `K = max(3, ⌈log₂(λ̂_max/π)⌉)`, the conservative large-spectrum rule.
    KRule,
    /// Continuous `2^K = λ̂_max/π`, stretching the responses over exactly
    /// the observed spectral range.
    Adapted,
}

/// Exact (eigendecomposition) vs Chebyshev (matrix polynomial) transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformMode {
    Exact,
    Chebyshev { degree: usize },
}

pub const DEFAULT_CHEBYSHEV_DEGREE: usize = 16;

/// Build options for [`build_system`].
#[derive(Debug, Clone, Copy)]
pub struct SystemConfig {
    /// Number of scale levels `J`.
    pub num_scales: usize,
    pub scale: DilationScale,
    pub mode: TransformMode,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { num_scales: 2, scale: DilationScale::Default, mode: TransformMode::Exact }
    }
}

enum SystemOps<F: Scalar> {
    Exact { eig: EigenDecomposition<F>, operators: Vec<Array2<F>> },
    Chebyshev { filters: Vec<ChebyshevFilter<F>> },
}

/// A realized framelet system over one graph. Immutable once built.
pub struct FrameletSystem<F: Scalar> {
    pub bank: FilterBank<F>,
    pub num_high: usize,
    pub num_scales: usize,
    /// Real dilation exponent: responses are evaluated at `θ = λ/2^K`.
    pub dilation_base: f64,
    pub mode: TransformMode,
    pub num_nodes: usize,
    /// Largest Laplacian eigenvalue: exact in exact mode, a power-iteration
    /// upper estimate in chebyshev mode.
    pub lambda_max: F,
    pub lambda_max_converged: bool,
    laplacian: Array2<F>,
    theta_scale: F,
    ops: SystemOps<F>,
}

impl<F: Scalar> fmt::Debug for FrameletSystem<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameletSystem")
            .field("bank", &self.bank.name)
            .field("num_high", &self.num_high)
            .field("num_scales", &self.num_scales)
            .field("dilation_base", &self.dilation_base)
            .field("mode", &self.mode)
            .field("num_nodes", &self.num_nodes)
            .finish()
    }
}

/// Coefficients of one decomposition: the low-pass block and the high-pass
/// blocks in canonical order (r-major, then scale `j` ascending).
#[derive(Debug, Clone)]
pub struct FrameletCoefficients<F: Scalar> {
    pub low: Array2<F>,
    pub highs: Vec<Array2<F>>,
}

impl<F: Scalar> FrameletCoefficients<F> {
    /// Low block first, then highs in canonical order.
    pub fn passes(&self) -> impl Iterator<Item = &Array2<F>> {
        std::iter::once(&self.low).chain(self.highs.iter())
    }

    pub fn num_passes(&self) -> usize {
        1 + self.highs.len()
    }
}

/// Squared-norm summary of a decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyGapStats<F> {
    pub low_sq_norm: F,
    pub high_sq_norms: Vec<F>,
    /// `‖low‖² − Σ ‖high‖²`; nonnegative for the default Haar system.
    pub gap: F,
}

/// Build a framelet system over `gm` from a filter bank.
///
/// Exact mode eigendecomposes the Laplacian and materializes each transform
/// `𝒲ᵢ = U gᵢ(Λ) Uᵀ`; chebyshev mode fits one polynomial filter per
/// response. Tightness of the realized responses is verified on a grid and
/// the build fails if it does not hold.
pub fn build_system<F: Scalar>(
    gm: &GraphMatrices<F>,
    bank: FilterBank<F>,
    cfg: &SystemConfig,
) -> Result<FrameletSystem<F>> {
    if cfg.num_scales < 1 {
        return Err(Error::InvalidConfig("num_scales must be at least 1".into()));
    }
    let (eig, lambda_max, lambda_max_converged) = match cfg.mode {
        TransformMode::Exact => {
            let eig = eigendecompose(&gm.laplacian)?;
            let lm = eig.eigenvalues[eig.eigenvalues.len() - 1].max(F::zero());
            (Some(eig), lm, true)
        }
        TransformMode::Chebyshev { .. } => {
            let (lm, ok) = lambda_max_estimate(&gm.laplacian, F::c(1e-6))?;
            (None, lm, ok)
        }
    };

    let lm64 = lambda_max.to_f64();
    let dilation_base = match cfg.scale {
        DilationScale::Default => 2.0,
        DilationScale::KRule => {
            if lm64 > 0.0 {
                (lm64 / PI).log2().ceil().max(3.0)
            } else {
                3.0
            }
        }
        DilationScale::Adapted => {
            if lm64 > 0.0 {
                (lm64 / PI).log2()
            } else {
                // Edgeless graph: only λ=0 occurs, any scale acts identically.
                2.0
            }
        }
    };
    let theta_scale = F::c(0.5f64.powf(dilation_base));

    let mut sys = FrameletSystem {
        num_high: bank.num_high(),
        num_scales: cfg.num_scales,
        bank,
        dilation_base,
        mode: cfg.mode,
        num_nodes: gm.num_nodes,
        lambda_max,
        lambda_max_converged,
        laplacian: gm.laplacian.clone(),
        theta_scale,
        ops: SystemOps::Chebyshev { filters: Vec::new() },
    };

    let domain_upper = lambda_max.max(F::c(2.0));
    let tightness = sys.tightness_residual(domain_upper, 1000);
    let tol = F::c(1e-12).max(F::epsilon() * F::c(50.0));
    if tightness > tol {
        return Err(Error::InvalidConfig(format!(
            "responses are not a tight frame: residual {} for bank '{}', J={}, K={}",
            tightness, sys.bank.name, sys.num_scales, sys.dilation_base
        )));
    }

    sys.ops = match cfg.mode {
        TransformMode::Exact => {
            let eig = eig.expect("exact mode decomposed above");
            let operators = (0..sys.num_passes())
                .map(|i| {
                    // U gᵢ(Λ) Uᵀ via column scaling.
                    let mut scaled = eig.eigenvectors.clone();
                    for (k, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
                        let g = sys.response(i, eig.eigenvalues[k]);
                        col.mapv_inplace(|v| v * g);
                    }
                    scaled.dot(&eig.eigenvectors.t())
                })
                .collect();
            SystemOps::Exact { eig, operators }
        }
        TransformMode::Chebyshev { degree } => {
            let labels = sys.response_labels();
            let filters = (0..sys.num_passes())
                .map(|i| {
                    chebyshev_fit(|l| sys.response(i, l), degree, domain_upper, labels[i].clone())
                })
                .collect::<Result<Vec<_>>>()?;
            SystemOps::Chebyshev { filters }
        }
    };
    Ok(sys)
}

/// The default system: Haar bank, two scales, pinned dilation, exact mode.
pub fn build_default_system<F: Scalar>(gm: &GraphMatrices<F>) -> Result<FrameletSystem<F>> {
    build_system(gm, FilterBank::haar(), &SystemConfig::default())
}

impl<F: Scalar> FrameletSystem<F> {
    /// Total number of transform passes, `1 + n·J`.
    pub fn num_passes(&self) -> usize {
        1 + self.num_high * self.num_scales
    }

    /// Map a high-pass pass index (`1..=nJ`) to its `(r, j)` pair, both
    /// one-based, in the canonical r-major order.
    pub fn pass_rj(&self, pass: usize) -> (usize, usize) {
        let idx = pass - 1;
        (idx / self.num_scales + 1, idx % self.num_scales + 1)
    }

    /// Scalar response `gᵢ(λ)` of pass `i` (0 = low-pass).
    pub fn response(&self, pass: usize, lambda: F) -> F {
        let theta = lambda * self.theta_scale;
        let j_max = self.num_scales;
        let half_pow = |m: usize| F::c(0.5f64.powi(m as i32));
        if pass == 0 {
            let mut g = F::one();
            for m in 0..j_max {
                g = g * self.bank.a_hat(theta * half_pow(m));
            }
            g
        } else {
            let (r, j) = self.pass_rj(pass);
            let mut g = self.bank.b_hat(r - 1, theta * half_pow(j_max - j));
            for m in (j_max - j + 1)..j_max {
                g = g * self.bank.a_hat(theta * half_pow(m));
            }
            g
        }
    }

    /// `["g0", "g1", ...]`, matching the canonical pass order.
    pub fn response_labels(&self) -> Vec<String> {
        (0..self.num_passes()).map(|i| format!("g{i}")).collect()
    }

    /// Max of `|Σᵢ gᵢ(λ)² − 1|` over a uniform grid on `[0, upper]`.
    pub fn tightness_residual(&self, upper: F, grid: usize) -> F {
        let mut worst = F::zero();
        for k in 0..grid {
            let lambda = upper * F::c(k as f64 / (grid - 1) as f64);
            let mut s = F::zero();
            for i in 0..self.num_passes() {
                s = s + self.response(i, lambda).powi(2);
            }
            worst = worst.max((s - F::one()).abs());
        }
        worst
    }

    /// Materialized transform matrices (exact mode only).
    pub fn operators(&self) -> Option<&[Array2<F>]> {
        match &self.ops {
            SystemOps::Exact { operators, .. } => Some(operators),
            SystemOps::Chebyshev { .. } => None,
        }
    }

    /// Fitted per-response filters (chebyshev mode only).
    pub fn filters(&self) -> Option<&[ChebyshevFilter<F>]> {
        match &self.ops {
            SystemOps::Chebyshev { filters } => Some(filters),
            SystemOps::Exact { .. } => None,
        }
    }

    /// The eigendecomposition backing an exact-mode system.
    pub fn eigensystem(&self) -> Option<&EigenDecomposition<F>> {
        match &self.ops {
            SystemOps::Exact { eig, .. } => Some(eig),
            SystemOps::Chebyshev { .. } => None,
        }
    }

    fn check_signal(&self, x: &Array2<F>) -> Result<()> {
        if x.nrows() != self.num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "signal has {} rows for a system over {} nodes",
                x.nrows(),
                self.num_nodes
            )));
        }
        Ok(())
    }

    /// Apply a single transform pass `𝒲ᵢ x`. Every pass is symmetric, so
    /// this doubles as the adjoint.
    pub fn apply_pass(&self, pass: usize, x: &Array2<F>) -> Result<Array2<F>> {
        self.check_signal(x)?;
        match &self.ops {
            SystemOps::Exact { operators, .. } => Ok(operators[pass].dot(x)),
            SystemOps::Chebyshev { filters } => filters[pass].apply_unchecked(&self.laplacian, x),
        }
    }

    /// Apply every transform pass to `x`.
    pub fn decompose(&self, x: &Array2<F>) -> Result<FrameletCoefficients<F>> {
        self.check_signal(x)?;
        let mut blocks = match &self.ops {
            SystemOps::Exact { operators, .. } => {
                operators.iter().map(|w| w.dot(x)).collect::<Vec<_>>()
            }
            SystemOps::Chebyshev { filters } => filters
                .iter()
                .map(|f| f.apply_unchecked(&self.laplacian, x))
                .collect::<Result<Vec<_>>>()?,
        };
        let low = blocks.remove(0);
        Ok(FrameletCoefficients { low, highs: blocks })
    }

    /// `𝒲₀ᵀ V₀ + Σᵢ 𝒲ᵢᵀ Wᵢ`; inverts [`FrameletSystem::decompose`] up to
    /// mode tolerance because the responses are tight.
    pub fn reconstruct(&self, c: &FrameletCoefficients<F>) -> Result<Array2<F>> {
        if c.num_passes() != self.num_passes() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficient blocks for a {}-pass system",
                c.num_passes(),
                self.num_passes()
            )));
        }
        for block in c.passes() {
            self.check_signal(block)?;
        }
        let mut acc: Array2<F> = Array2::zeros(c.low.raw_dim());
        match &self.ops {
            SystemOps::Exact { operators, .. } => {
                for (w, block) in operators.iter().zip(c.passes()) {
                    acc = acc + w.t().dot(block);
                }
            }
            SystemOps::Chebyshev { filters } => {
                // Polynomials of a symmetric matrix are symmetric, so the
                // adjoint transform is the same filter again.
                for (f, block) in filters.iter().zip(c.passes()) {
                    acc = acc + f.apply_unchecked(&self.laplacian, block)?;
                }
            }
        }
        Ok(acc)
    }
}

/// Squared Frobenius norms per pass and the low-minus-high gap.
pub fn energy_gap_stats<F: Scalar>(c: &FrameletCoefficients<F>) -> EnergyGapStats<F> {
    let sq = |m: &Array2<F>| m.iter().map(|&v| v * v).sum::<F>();
    let low_sq_norm = sq(&c.low);
    let high_sq_norms: Vec<F> = c.highs.iter().map(|h| sq(h)).collect();
    let gap = low_sq_norm - high_sq_norms.iter().copied().sum::<F>();
    EnergyGapStats { low_sq_norm, high_sq_norms, gap }
}

#[derive(Serialize, Deserialize)]
struct CoefficientsJson<F> {
    low: Vec<Vec<F>>,
    highs: Vec<Vec<Vec<F>>>,
    responses: Vec<String>,
}

fn rows<F: Scalar>(m: &Array2<F>) -> Vec<Vec<F>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Dump coefficients as `{"low": ..., "highs": [...], "responses": [...]}`
/// with row-major numeric arrays.
pub fn coefficients_to_json<F: Scalar>(
    sys: &FrameletSystem<F>,
    c: &FrameletCoefficients<F>,
) -> Result<String> {
    let doc = CoefficientsJson {
        low: rows(&c.low),
        highs: c.highs.iter().map(|h| rows(h)).collect(),
        responses: sys.response_labels(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}
