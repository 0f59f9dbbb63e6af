//! Propagation layers (GCN, framelet convolution, energy-enhanced
//! convolution), the augmented adjacency pair, a reverse-mode trainer with
//! cross-entropy and Adam, and the structural checks that go with them
//! (equivariance, depth dynamics, gradient correctness hooks).
//!
//! Everything here is dense and deterministic: all randomness flows through
//! seeded ChaCha streams, so a (config, graph) pair reproduces its history
//! bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{
    dirichlet_energy_edge_sum, framelet_energies, top_singular_value, EnergyReport,
};
use crate::error::{Error, Result};
use crate::frames::{build_default_system, FrameletSystem, TransformMode};
use crate::graph::{build_matrices, Graph, GraphMatrices, Split};
use crate::Scalar;

/// The energy-enhanced adjacency pair `Â^L = Â − εD̃⁻¹` (low pass) and
/// `Â^H = Â + εD̃⁻¹` (high passes).
///
/// The shift is diagonal, so both stay symmetric, and every eigenvalue of
/// `Â^L` sits at or below the matching eigenvalue of `Â`, which sits at or
/// below the matching eigenvalue of `Â^H`.
#[derive(Debug, Clone)]
pub struct AugmentedPair<F: Scalar> {
    pub a_low: Array2<F>,
    pub a_high: Array2<F>,
    pub epsilon: F,
}

/// Build the pair; `ε = 0` degenerates both matrices to `Â` exactly.
pub fn build_augmented_pair<F: Scalar>(
    gm: &GraphMatrices<F>,
    epsilon: F,
) -> Result<AugmentedPair<F>> {
    if epsilon < F::zero() {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let mut a_low = gm.a_hat.clone();
    let mut a_high = gm.a_hat.clone();
    for i in 0..gm.num_nodes {
        let shift = epsilon / gm.deg_tilde[i];
        a_low[(i, i)] = a_low[(i, i)] - shift;
        a_high[(i, i)] = a_high[(i, i)] + shift;
    }
    Ok(AugmentedPair { a_low, a_high, epsilon })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<F: Scalar>(&self, z: &Array2<F>) -> Array2<F> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(F::zero())),
            Activation::Identity => z.clone(),
        }
    }

    /// Elementwise derivative evaluated at the pre-activation.
    pub fn grad_mask<F: Scalar>(&self, z: &Array2<F>) -> Array2<F> {
        match self {
            Activation::Relu => z.mapv(|v| if v > F::zero() { F::one() } else { F::zero() }),
            Activation::Identity => Array2::from_elem(z.raw_dim(), F::one()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Gcn,
    Framelet,
    EeConv,
}

/// Model hyperparameters. `epsilon` only matters for `EeConv`;
/// `framelet_mode` only for the framelet-based kinds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelConfig<F: Scalar> {
    pub layer_kind: LayerKind,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub epsilon: F,
    pub activation: Activation,
    pub dropout_rate: F,
    pub framelet_mode: TransformMode,
    pub seed: u64,
}

impl<F: Scalar> ModelConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 1 {
            return Err(Error::InvalidConfig("num_layers must be at least 1".into()));
        }
        if self.hidden_dim < 1 {
            return Err(Error::InvalidConfig("hidden_dim must be at least 1".into()));
        }
        let d = self.dropout_rate;
        if d < F::zero() || d >= F::one() {
            return Err(Error::InvalidConfig("dropout_rate must lie in [0, 1)".into()));
        }
        if self.epsilon < F::zero() {
            return Err(Error::InvalidConfig("epsilon must be nonnegative".into()));
        }
        Ok(())
    }

    /// A reasonable default around one knob: the layer kind.
    pub fn new(layer_kind: LayerKind, num_layers: usize, seed: u64) -> Self {
        Self {
            layer_kind,
            num_layers,
            hidden_dim: 32,
            epsilon: F::c(0.1),
            activation: Activation::Relu,
            dropout_rate: F::zero(),
            framelet_mode: TransformMode::Exact,
            seed,
        }
    }
}

/// One tensor per trainable parameter, in the model's shape. Doubles as
/// the container for Adam's moment estimates.
#[derive(Debug, Clone)]
pub struct Gradients<F: Scalar> {
    pub input_proj: Array2<F>,
    /// `layers[l][i]` matches `ModelState::layers`.
    pub layers: Vec<Vec<Array2<F>>>,
    pub readout: Array2<F>,
    /// Kept as a `1 × C` matrix so every parameter is uniformly 2-d.
    pub readout_bias: Array2<F>,
}

#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    pub m: Gradients<F>,
    pub v: Gradients<F>,
    pub step: usize,
}

/// All trainable parameters plus optimizer state.
///
/// Shapes chain `input_dim → hidden → … → hidden → num_classes`; framelet
/// kinds carry one weight matrix per transform pass per layer, GCN exactly
/// one.
#[derive(Debug, Clone)]
pub struct ModelState<F: Scalar> {
    pub input_proj: Array2<F>,
    pub layers: Vec<Vec<Array2<F>>>,
    pub readout: Array2<F>,
    pub readout_bias: Array2<F>,
    pub adam: AdamState<F>,
}

/// Glorot-uniform draw in `±√(6/(fan_in + fan_out))`, row-major order.
pub fn glorot_uniform<F: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<F> {
    let bound = F::c((6.0 / (rows + cols) as f64).sqrt());
    let mut w = Array2::zeros((rows, cols));
    for v in w.iter_mut() {
        *v = F::uniform(rng, -bound, bound);
    }
    w
}

/// Rescale a matrix to unit spectral norm in place (no-op on zero input).
pub fn normalize_spectral<F: Scalar>(w: &mut Array2<F>) {
    let s = top_singular_value(w);
    if s > F::zero() {
        w.mapv_inplace(|v| v / s);
    }
}

fn zeros_like<F: Scalar>(state_layers: &[Vec<Array2<F>>], proj: &Array2<F>, readout: &Array2<F>, bias: &Array2<F>) -> Gradients<F> {
    Gradients {
        input_proj: Array2::zeros(proj.raw_dim()),
        layers: state_layers
            .iter()
            .map(|passes| passes.iter().map(|w| Array2::zeros(w.raw_dim())).collect())
            .collect(),
        readout: Array2::zeros(readout.raw_dim()),
        readout_bias: Array2::zeros(bias.raw_dim()),
    }
}

impl<F: Scalar> ModelState<F> {
    /// Fresh Glorot-initialized parameters; `num_passes` is 1 for GCN and
    /// the system's pass count otherwise.
    pub fn init(
        config: &ModelConfig<F>,
        input_dim: usize,
        num_classes: usize,
        num_passes: usize,
    ) -> Result<Self> {
        config.validate()?;
        if input_dim < 1 || num_classes < 1 || num_passes < 1 {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden_dim;
        let input_proj = glorot_uniform(input_dim, h, &mut rng);
        let layers: Vec<Vec<Array2<F>>> = (0..config.num_layers)
            .map(|_| (0..num_passes).map(|_| glorot_uniform(h, h, &mut rng)).collect())
            .collect();
        let readout = glorot_uniform(h, num_classes, &mut rng);
        let readout_bias = Array2::zeros((1, num_classes));
        let zeros = zeros_like(&layers, &input_proj, &readout, &readout_bias);
        Ok(Self {
            input_proj,
            layers,
            readout,
            readout_bias,
            adam: AdamState { m: zeros.clone(), v: zeros, step: 0 },
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_passes(&self) -> usize {
        self.layers.first().map(|p| p.len()).unwrap_or(0)
    }
}

/// The graph-derived constants a model propagates with: the matrices, the
/// framelet system (framelet kinds), and the augmented pair (EEConv).
pub struct ModelArtifacts<F: Scalar> {
    pub gm: GraphMatrices<F>,
    pub sys: Option<FrameletSystem<F>>,
    pub pair: Option<AugmentedPair<F>>,
}

impl<F: Scalar> ModelArtifacts<F> {
    pub fn build(gm: GraphMatrices<F>, config: &ModelConfig<F>) -> Result<Self> {
        config.validate()?;
        let sys = match config.layer_kind {
            LayerKind::Gcn => None,
            LayerKind::Framelet | LayerKind::EeConv => {
                let cfg = crate::frames::SystemConfig {
                    mode: config.framelet_mode,
                    ..Default::default()
                };
                Some(crate::frames::build_system(&gm, crate::frames::FilterBank::haar(), &cfg)?)
            }
        };
        let pair = match config.layer_kind {
            LayerKind::EeConv => Some(build_augmented_pair(&gm, config.epsilon)?),
            _ => None,
        };
        Ok(Self { gm, sys, pair })
    }

    pub fn num_passes(&self) -> usize {
        self.sys.as_ref().map(|s| s.num_passes()).unwrap_or(1)
    }
}

/// One GCN propagation step `σ(Â h W)`.
pub fn gcn_forward<F: Scalar>(
    gm: &GraphMatrices<F>,
    h: &Array2<F>,
    w: &Array2<F>,
    activation: Activation,
) -> Result<Array2<F>> {
    if h.nrows() != gm.num_nodes || h.ncols() != w.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "gcn layer: signal {}x{}, weights {}x{}, graph {}",
            h.nrows(),
            h.ncols(),
            w.nrows(),
            w.ncols(),
            gm.num_nodes
        )));
    }
    Ok(activation.apply(&gm.a_hat.dot(h).dot(w)))
}

fn conv_forward_with<F: Scalar>(
    sys: &FrameletSystem<F>,
    pass_adj: impl Fn(usize) -> Array2<F>,
    h: &Array2<F>,
    weights: &[Array2<F>],
    activation: Activation,
) -> Result<Array2<F>>
where
{
    if weights.len() != sys.num_passes() {
        return Err(Error::ShapeMismatch(format!(
            "{} weight matrices for a {}-pass system",
            weights.len(),
            sys.num_passes()
        )));
    }
    let mut out: Option<Array2<F>> = None;
    for (i, w) in weights.iter().enumerate() {
        if h.ncols() != w.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "pass {i}: signal has {} channels, weights are {}x{}",
                h.ncols(),
                w.nrows(),
                w.ncols()
            )));
        }
        let s = sys.apply_pass(i, h)?;
        let z = pass_adj(i).dot(&s).dot(w);
        let block = sys.apply_pass(i, &activation.apply(&z))?;
        out = Some(match out {
            None => block,
            Some(acc) => acc + block,
        });
    }
    Ok(out.expect("at least one pass"))
}

/// Framelet convolution: per pass `Hᵢ = σ(Â 𝒲ᵢ h Wᵢ)`, then tight-frame
/// reconstruction `Σᵢ 𝒲ᵢᵀ Hᵢ`.
pub fn framelet_conv_forward<F: Scalar>(
    sys: &FrameletSystem<F>,
    gm: &GraphMatrices<F>,
    h: &Array2<F>,
    weights: &[Array2<F>],
    activation: Activation,
) -> Result<Array2<F>> {
    conv_forward_with(sys, |_| gm.a_hat.clone(), h, weights, activation)
}

/// Energy-enhanced convolution: the low pass propagates with `Â^L`, every
/// high pass with `Â^H`; `ε = 0` reproduces the framelet convolution
/// exactly.
pub fn eeconv_forward<F: Scalar>(
    sys: &FrameletSystem<F>,
    pair: &AugmentedPair<F>,
    h: &Array2<F>,
    weights: &[Array2<F>],
    activation: Activation,
) -> Result<Array2<F>> {
    conv_forward_with(
        sys,
        |i| if i == 0 { pair.a_low.clone() } else { pair.a_high.clone() },
        h,
        weights,
        activation,
    )
}

/// Cached intermediates of one forward run, as consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<F: Scalar> {
    /// Post-dropout input of each propagation layer.
    pub layer_inputs: Vec<Array2<F>>,
    /// Inverted-scale dropout masks, `None` when dropout was off.
    pub masks: Vec<Option<Array2<F>>>,
    /// Per layer, per pass: the propagated block `Aᵢ 𝒲ᵢ h`.
    pub propagated: Vec<Vec<Array2<F>>>,
    /// Per layer, per pass: the pre-activation `Aᵢ 𝒲ᵢ h Wᵢ`.
    pub preact: Vec<Vec<Array2<F>>>,
    /// Output of each propagation layer (pre-dropout of the next).
    pub outputs: Vec<Array2<F>>,
    pub logits: Array2<F>,
}

fn pass_adjacency<'a, F: Scalar>(
    config: &ModelConfig<F>,
    art: &'a ModelArtifacts<F>,
    pass: usize,
) -> &'a Array2<F> {
    match config.layer_kind {
        LayerKind::Gcn | LayerKind::Framelet => &art.gm.a_hat,
        LayerKind::EeConv => {
            let pair = art.pair.as_ref().expect("eeconv artifacts carry a pair");
            if pass == 0 {
                &pair.a_low
            } else {
                &pair.a_high
            }
        }
    }
}

/// Full model forward: input projection, `L` propagation layers with
/// activation (and seeded dropout when `dropout_rng` is supplied), linear
/// readout. Returns logits plus the trace backward needs.
pub fn model_forward<F: Scalar>(
    state: &ModelState<F>,
    config: &ModelConfig<F>,
    art: &ModelArtifacts<F>,
    x: &Array2<F>,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array2<F>, ForwardTrace<F>)> {
    config.validate()?;
    if x.nrows() != art.gm.num_nodes {
        return Err(Error::ShapeMismatch(format!(
            "features have {} rows for a graph of {} nodes",
            x.nrows(),
            art.gm.num_nodes
        )));
    }
    if x.ncols() != state.input_proj.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} channels, input projection expects {}",
            x.ncols(),
            state.input_proj.nrows()
        )));
    }
    if state.num_layers() != config.num_layers {
        return Err(Error::ShapeMismatch("state does not match config".into()));
    }
    let num_passes = art.num_passes();
    let mut h = x.dot(&state.input_proj);
    let mut trace = ForwardTrace {
        layer_inputs: Vec::with_capacity(config.num_layers),
        masks: Vec::with_capacity(config.num_layers),
        propagated: Vec::with_capacity(config.num_layers),
        preact: Vec::with_capacity(config.num_layers),
        outputs: Vec::with_capacity(config.num_layers),
        logits: Array2::zeros((0, 0)),
    };
    for passes in &state.layers {
        if passes.len() != num_passes {
            return Err(Error::ShapeMismatch(format!(
                "layer holds {} pass weights, artifacts expect {}",
                passes.len(),
                num_passes
            )));
        }
        let mask = match (&mut dropout_rng, config.dropout_rate > F::zero()) {
            (Some(rng), true) => {
                let keep = F::one() - config.dropout_rate;
                let mut m = Array2::zeros(h.raw_dim());
                for v in m.iter_mut() {
                    *v = if F::c(rng.gen::<f64>()) < config.dropout_rate {
                        F::zero()
                    } else {
                        F::one() / keep
                    };
                }
                Some(m)
            }
            _ => None,
        };
        if let Some(m) = &mask {
            h = &h * m;
        }
        let mut props = Vec::with_capacity(num_passes);
        let mut zs = Vec::with_capacity(num_passes);
        let mut out: Option<Array2<F>> = None;
        for (i, w) in passes.iter().enumerate() {
            let s = match &art.sys {
                Some(sys) => sys.apply_pass(i, &h)?,
                None => h.clone(),
            };
            let p = pass_adjacency(config, art, i).dot(&s);
            let z = p.dot(w);
            let a = config.activation.apply(&z);
            let block = match &art.sys {
                Some(sys) => sys.apply_pass(i, &a)?,
                None => a,
            };
            props.push(p);
            zs.push(z);
            out = Some(match out {
                None => block,
                Some(acc) => acc + block,
            });
        }
        trace.layer_inputs.push(h.clone());
        trace.masks.push(mask);
        trace.propagated.push(props);
        trace.preact.push(zs);
        h = out.expect("at least one pass");
        trace.outputs.push(h.clone());
    }
    let logits = h.dot(&state.readout) + &state.readout_bias;
    trace.logits = logits.clone();
    Ok((logits, trace))
}

/// Row-wise softmax.
pub fn softmax_rows<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let mx = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let s: F = row.iter().copied().sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Mean negative log-softmax over the masked nodes, with its gradient in
/// the logits.
pub fn cross_entropy_loss<F: Scalar>(
    logits: &Array2<F>,
    labels: &[usize],
    mask: &[bool],
) -> Result<(F, Array2<F>)> {
    let n = logits.nrows();
    if labels.len() != n || mask.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows, {} labels, {} mask entries",
            n,
            labels.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::InvalidConfig("cross entropy needs a nonempty mask".into()));
    }
    let c = logits.ncols();
    let inv = F::one() / F::c(count as f64);
    let probs = softmax_rows(logits);
    let mut loss = F::zero();
    let mut grad = Array2::zeros(logits.raw_dim());
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let y = labels[i];
        if y >= c {
            return Err(Error::GraphData(format!("label {y} out of range for {c} classes")));
        }
        // Recompute the log directly from shifted logits for stability.
        let row = logits.row(i);
        let mx = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        let logsum = row.iter().map(|&v| (v - mx).exp()).sum::<F>().ln();
        loss = loss - (row[y] - mx - logsum) * inv;
        for k in 0..c {
            let indicator = if k == y { F::one() } else { F::zero() };
            grad[(i, k)] = (probs[(i, k)] - indicator) * inv;
        }
    }
    Ok((loss, grad))
}

/// Fraction of masked nodes whose argmax logit matches the label; 0 on an
/// empty mask.
pub fn accuracy<F: Scalar>(logits: &Array2<F>, labels: &[usize], mask: &[bool]) -> F {
    let mut hit = 0usize;
    let mut tot = 0usize;
    for (i, row) in logits.rows().into_iter().enumerate() {
        if !mask[i] {
            continue;
        }
        tot += 1;
        let mut best = 0usize;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        if best == labels[i] {
            hit += 1;
        }
    }
    if tot == 0 {
        F::zero()
    } else {
        F::c(hit as f64 / tot as f64)
    }
}

/// Reverse-mode gradients of every parameter given the loss gradient in
/// the logits. The transforms and adjacencies are constants; only weights
/// receive gradients.
pub fn backward<F: Scalar>(
    state: &ModelState<F>,
    config: &ModelConfig<F>,
    art: &ModelArtifacts<F>,
    x: &Array2<F>,
    trace: &ForwardTrace<F>,
    dlogits: &Array2<F>,
) -> Result<Gradients<F>> {
    let l_count = config.num_layers;
    if trace.outputs.len() != l_count
        || trace.layer_inputs.len() != l_count
        || trace.preact.len() != l_count
    {
        return Err(Error::ShapeMismatch(
            "forward trace does not match the model configuration (stale trace?)".into(),
        ));
    }
    let last = trace.outputs.last().expect("at least one layer");
    if dlogits.nrows() != last.nrows() || dlogits.ncols() != state.readout.ncols() {
        return Err(Error::ShapeMismatch("loss gradient shape does not match logits".into()));
    }
    let mut grads = zeros_like(&state.layers, &state.input_proj, &state.readout, &state.readout_bias);
    grads.readout = last.t().dot(dlogits);
    grads.readout_bias = dlogits
        .sum_axis(Axis(0))
        .insert_axis(Axis(0));
    let mut dh = dlogits.dot(&state.readout.t());
    for l in (0..l_count).rev() {
        let passes = &state.layers[l];
        let mut dh_in: Array2<F> = Array2::zeros(trace.layer_inputs[l].raw_dim());
        for (i, w) in passes.iter().enumerate() {
            let d_block = match &art.sys {
                Some(sys) => sys.apply_pass(i, &dh)?,
                None => dh.clone(),
            };
            let dz = &d_block * &config.activation.grad_mask(&trace.preact[l][i]);
            grads.layers[l][i] = trace.propagated[l][i].t().dot(&dz);
            let dp = dz.dot(&w.t());
            let ds = pass_adjacency(config, art, i).t().dot(&dp);
            let contrib = match &art.sys {
                Some(sys) => sys.apply_pass(i, &ds)?,
                None => ds,
            };
            dh_in = dh_in + contrib;
        }
        if let Some(m) = &trace.masks[l] {
            dh_in = dh_in * m;
        }
        dh = dh_in;
    }
    grads.input_proj = x.t().dot(&dh);
    Ok(grads)
}

fn adam_update<F: Scalar>(
    key: &str,
    w: &mut Array2<F>,
    g: &Array2<F>,
    m: &mut Array2<F>,
    v: &mut Array2<F>,
    t: usize,
    lr: F,
    betas: (F, F),
    weight_decay: F,
) -> Result<()> {
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("gradient for {key}")));
    }
    let (b1, b2) = betas;
    let eps = F::c(1e-8);
    let bc1 = F::one() - b1.powi(t as i32);
    let bc2 = F::one() - b2.powi(t as i32);
    for ((wv, &gv), (mv, vv)) in w.iter_mut().zip(g.iter()).zip(m.iter_mut().zip(v.iter_mut())) {
        *mv = b1 * *mv + (F::one() - b1) * gv;
        *vv = b2 * *vv + (F::one() - b2) * gv * gv;
        let mhat = *mv / bc1;
        let vhat = *vv / bc2;
        // Decoupled weight decay: shrink first, then take the Adam step.
        *wv = *wv - lr * weight_decay * *wv - lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// One Adam step with decoupled weight decay over every parameter, in
/// canonical order (input projection, layers by index and pass, readout,
/// bias).
pub fn adam_step<F: Scalar>(
    state: &mut ModelState<F>,
    grads: &Gradients<F>,
    lr: F,
    betas: (F, F),
    weight_decay: F,
) -> Result<()> {
    state.adam.step += 1;
    let t = state.adam.step;
    adam_update(
        "input_proj",
        &mut state.input_proj,
        &grads.input_proj,
        &mut state.adam.m.input_proj,
        &mut state.adam.v.input_proj,
        t,
        lr,
        betas,
        weight_decay,
    )?;
    for l in 0..state.layers.len() {
        for i in 0..state.layers[l].len() {
            let key = format!("layer{l}.pass{i}");
            adam_update(
                &key,
                &mut state.layers[l][i],
                &grads.layers[l][i],
                &mut state.adam.m.layers[l][i],
                &mut state.adam.v.layers[l][i],
                t,
                lr,
                betas,
                weight_decay,
            )?;
        }
    }
    adam_update(
        "readout",
        &mut state.readout,
        &grads.readout,
        &mut state.adam.m.readout,
        &mut state.adam.v.readout,
        t,
        lr,
        betas,
        weight_decay,
    )?;
    adam_update(
        "readout_bias",
        &mut state.readout_bias,
        &grads.readout_bias,
        &mut state.adam.m.readout_bias,
        &mut state.adam.v.readout_bias,
        t,
        lr,
        betas,
        weight_decay,
    )?;
    Ok(())
}

/// Training-loop knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainConfig<F: Scalar> {
    pub lr: F,
    pub epochs: usize,
    pub weight_decay: F,
    /// Evaluate (and consider checkpointing) every this many epochs; the
    /// final epoch always evaluates.
    pub eval_every: usize,
    /// Record per-layer energy reports at evaluation points.
    pub record_energy: bool,
}

impl<F: Scalar> Default for TrainConfig<F> {
    fn default() -> Self {
        Self {
            lr: F::c(0.01),
            epochs: 300,
            weight_decay: F::c(5e-3),
            eval_every: 10,
            record_energy: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics<F> {
    pub epoch: usize,
    pub loss: F,
    pub train_acc: F,
    pub val_acc: F,
    pub test_acc: F,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerEnergyHistory<F> {
    pub epoch: usize,
    /// One report per propagation layer, in depth order.
    pub reports: Vec<EnergyReport<F>>,
}

pub struct TrainResult<F: Scalar> {
    /// The state with the best validation accuracy seen at an evaluation
    /// point (earliest on ties).
    pub state: ModelState<F>,
    pub history: Vec<EpochMetrics<F>>,
    pub energy_history: Vec<LayerEnergyHistory<F>>,
}

/// Train a model on one labeled, split graph. Deterministic for a fixed
/// (graph, config, train config).
pub fn train<F: Scalar>(
    g: &Graph<F>,
    config: &ModelConfig<F>,
    tc: &TrainConfig<F>,
) -> Result<TrainResult<F>> {
    config.validate()?;
    if tc.eval_every == 0 {
        return Err(Error::InvalidConfig("eval_every must be positive".into()));
    }
    let labels = g
        .labels
        .as_ref()
        .ok_or_else(|| Error::GraphData("training requires labels".into()))?
        .clone();
    if g.split.is_none() {
        return Err(Error::GraphData("training requires a train/val/test split".into()));
    }
    let train_mask = g.split_mask(Split::Train)?;
    let val_mask = g.split_mask(Split::Val)?;
    let test_mask = g.split_mask(Split::Test)?;
    let gm = build_matrices(g)?;
    let art = ModelArtifacts::build(gm, config)?;
    let num_classes = g.num_classes().max(2);
    let mut state = ModelState::init(config, g.feature_dim(), num_classes, art.num_passes())?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9));
    let energy_sys = if tc.record_energy {
        Some(match &art.sys {
            Some(_) => None,
            None => Some(build_default_system(&art.gm)?),
        })
    } else {
        None
    };

    let mut history = Vec::new();
    let mut energy_history = Vec::new();
    let mut best_val = F::neg_infinity();
    let mut best_state = state.clone();
    for epoch in 1..=tc.epochs {
        let (logits, tr) =
            model_forward(&state, config, &art, &g.features, Some(&mut dropout_rng))?;
        let (loss, dlogits) = cross_entropy_loss(&logits, &labels, &train_mask)?;
        let grads = backward(&state, config, &art, &g.features, &tr, &dlogits)?;
        adam_step(&mut state, &grads, tc.lr, (F::c(0.9), F::c(0.999)), tc.weight_decay)?;

        if epoch % tc.eval_every == 0 || epoch == tc.epochs {
            let (eval_logits, eval_tr) = model_forward(&state, config, &art, &g.features, None)?;
            let train_acc = accuracy(&eval_logits, &labels, &train_mask);
            let val_acc = accuracy(&eval_logits, &labels, &val_mask);
            let test_acc = accuracy(&eval_logits, &labels, &test_mask);
            history.push(EpochMetrics { epoch, loss, train_acc, val_acc, test_acc });
            if val_acc > best_val {
                best_val = val_acc;
                best_state = state.clone();
            }
            if let Some(extra) = &energy_sys {
                let sys = art.sys.as_ref().or(extra.as_ref()).expect("energy system present");
                let reports = eval_tr
                    .outputs
                    .iter()
                    .map(|h| framelet_energies(sys, &art.gm, h))
                    .collect::<Result<Vec<_>>>()?;
                energy_history.push(LayerEnergyHistory { epoch, reports });
            }
        }
    }
    Ok(TrainResult { state: best_state, history, energy_history })
}

/// Max absolute deviation `‖f(Pg, Px) − P f(g, x)‖_max` for one node
/// permutation, with the framelet system rebuilt on the permuted graph and
/// the same weights used on both sides.
pub fn equivariance_check<F: Scalar>(
    config: &ModelConfig<F>,
    g: &Graph<F>,
    perm: &[usize],
) -> Result<F> {
    let art = ModelArtifacts::build(build_matrices(g)?, config)?;
    let pg = g.permuted(perm)?;
    let art_p = ModelArtifacts::build(build_matrices(&pg)?, config)?;
    let num_classes = g.num_classes().max(2);
    let state = ModelState::init(config, g.feature_dim(), num_classes, art.num_passes())?;
    let (base, _) = model_forward(&state, config, &art, &g.features, None)?;
    let (permuted, _) = model_forward(&state, config, &art_p, &pg.features, None)?;
    let mut worst = F::zero();
    for (new_i, row) in permuted.rows().into_iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            worst = worst.max((v - base[(perm[new_i], k)]).abs());
        }
    }
    Ok(worst)
}

/// Depth-dynamics probe: push `x` through `num_layers` untrained
/// propagation layers (identity activation, Glorot weights rescaled to
/// unit spectral norm) and record the Dirichlet energy after each layer,
/// including the input. Energies use the edge-sum route, which stays exact
/// at the tiny magnitudes deep GCN stacks reach.
pub fn depth_energy_trajectory<F: Scalar>(
    gm: &GraphMatrices<F>,
    sys: Option<&FrameletSystem<F>>,
    kind: LayerKind,
    epsilon: F,
    x: &Array2<F>,
    num_layers: usize,
    seed: u64,
) -> Result<Vec<F>> {
    let d = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair = match kind {
        LayerKind::EeConv => Some(build_augmented_pair(gm, epsilon)?),
        _ => None,
    };
    let num_passes = match kind {
        LayerKind::Gcn => 1,
        _ => {
            sys.ok_or_else(|| {
                Error::InvalidConfig("framelet layer kinds need a framelet system".into())
            })?
            .num_passes()
        }
    };
    let mut h = x.clone();
    let mut energies = vec![dirichlet_energy_edge_sum(gm, &h)?];
    for _ in 0..num_layers {
        let weights: Vec<Array2<F>> = (0..num_passes)
            .map(|_| {
                let mut w = glorot_uniform(d, d, &mut rng);
                normalize_spectral(&mut w);
                w
            })
            .collect();
        h = match kind {
            LayerKind::Gcn => gcn_forward(gm, &h, &weights[0], Activation::Identity)?,
            LayerKind::Framelet => framelet_conv_forward(
                sys.expect("checked above"),
                gm,
                &h,
                &weights,
                Activation::Identity,
            )?,
            LayerKind::EeConv => eeconv_forward(
                sys.expect("checked above"),
                pair.as_ref().expect("pair built above"),
                &h,
                &weights,
                Activation::Identity,
            )?,
        };
        energies.push(dirichlet_energy_edge_sum(gm, &h)?);
    }
    Ok(energies)
}

#[derive(Serialize, Deserialize)]
struct FlatTensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

fn flatten<F: Scalar>(m: &Array2<F>) -> FlatTensor<F> {
    FlatTensor { shape: vec![m.nrows(), m.ncols()], data: m.iter().copied().collect() }
}

fn unflatten<F: Scalar>(t: &FlatTensor<F>) -> Result<Array2<F>> {
    if t.shape.len() != 2 || t.shape[0] * t.shape[1] != t.data.len() {
        return Err(Error::GraphData("malformed tensor in checkpoint".into()));
    }
    Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
        .map_err(|e| Error::GraphData(format!("checkpoint tensor: {e}")))
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct Checkpoint<F: Scalar> {
    config: ModelConfig<F>,
    weights: BTreeMap<String, FlatTensor<F>>,
    adam_m: BTreeMap<String, FlatTensor<F>>,
    adam_v: BTreeMap<String, FlatTensor<F>>,
    step: usize,
}

fn to_map<F: Scalar>(g: &GradView<F>) -> BTreeMap<String, FlatTensor<F>> {
    let mut map = BTreeMap::new();
    map.insert("input_proj".into(), flatten(g.input_proj));
    for (l, passes) in g.layers.iter().enumerate() {
        for (i, w) in passes.iter().enumerate() {
            map.insert(format!("layer{l}.pass{i}"), flatten(w));
        }
    }
    map.insert("readout".into(), flatten(g.readout));
    map.insert("readout_bias".into(), flatten(g.readout_bias));
    map
}

struct GradView<'a, F: Scalar> {
    input_proj: &'a Array2<F>,
    layers: &'a [Vec<Array2<F>>],
    readout: &'a Array2<F>,
    readout_bias: &'a Array2<F>,
}

fn view_of<F: Scalar>(g: &Gradients<F>) -> GradView<'_, F> {
    GradView {
        input_proj: &g.input_proj,
        layers: &g.layers,
        readout: &g.readout,
        readout_bias: &g.readout_bias,
    }
}

fn from_map<F: Scalar>(
    map: &BTreeMap<String, FlatTensor<F>>,
    num_layers: usize,
) -> Result<Gradients<F>> {
    let get = |key: &str| -> Result<Array2<F>> {
        map.get(key)
            .ok_or_else(|| Error::GraphData(format!("checkpoint missing tensor '{key}'")))
            .and_then(unflatten)
    };
    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let mut passes = Vec::new();
        let mut i = 0;
        while map.contains_key(&format!("layer{l}.pass{i}")) {
            passes.push(get(&format!("layer{l}.pass{i}"))?);
            i += 1;
        }
        if passes.is_empty() {
            return Err(Error::GraphData(format!("checkpoint has no weights for layer {l}")));
        }
        layers.push(passes);
    }
    Ok(Gradients {
        input_proj: get("input_proj")?,
        layers,
        readout: get("readout")?,
        readout_bias: get("readout_bias")?,
    })
}

/// Write a JSON checkpoint: config echo, flat weight tensors keyed
/// `layer{l}.pass{i}` (plus projection/readout), Adam moments, step count.
pub fn save_checkpoint<F: Scalar>(
    state: &ModelState<F>,
    config: &ModelConfig<F>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let doc = Checkpoint {
        config: config.clone(),
        weights: to_map(&GradView {
            input_proj: &state.input_proj,
            layers: &state.layers,
            readout: &state.readout,
            readout_bias: &state.readout_bias,
        }),
        adam_m: to_map(&view_of(&state.adam.m)),
        adam_v: to_map(&view_of(&state.adam.v)),
        step: state.adam.step,
    };
    Ok(std::fs::write(path, serde_json::to_string_pretty(&doc)?)?)
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint<F: Scalar>(
    path: impl AsRef<Path>,
) -> Result<(ModelConfig<F>, ModelState<F>)> {
    let doc: Checkpoint<F> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    doc.config.validate()?;
    let weights = from_map(&doc.weights, doc.config.num_layers)?;
    let m = from_map(&doc.adam_m, doc.config.num_layers)?;
    let v = from_map(&doc.adam_v, doc.config.num_layers)?;
    let state = ModelState {
        input_proj: weights.input_proj,
        layers: weights.layers,
        readout: weights.readout,
        readout_bias: weights.readout_bias,
        adam: AdamState { m, v, step: doc.step },
    };
    Ok((doc.config, state))
}
