//! Untrained propagation stacks for the dynamics experiments.
//!
//! Same recipe as `framelet::nn::depth_energy_trajectory` (per-layer Glorot
//! weights rescaled to unit spectral norm, identity activation), but keeping
//! every intermediate state so the trajectory and sweep commands can analyze
//! hidden features per layer, not just their total energy.

use framelet::frames::FrameletSystem;
use framelet::graph::GraphMatrices;
use framelet::nn::{
    build_augmented_pair, eeconv_forward, framelet_conv_forward, gcn_forward, glorot_uniform,
    normalize_spectral, Activation, LayerKind,
};
use framelet::{Error, Result};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Push `x` through `num_layers` untrained layers of the given kind and
/// return all `num_layers + 1` states, input first.
pub fn stack_states(
    gm: &GraphMatrices<f64>,
    sys: Option<&FrameletSystem<f64>>,
    kind: LayerKind,
    epsilon: f64,
    x: &Array2<f64>,
    num_layers: usize,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
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
    let mut states = Vec::with_capacity(num_layers + 1);
    states.push(x.clone());
    for _ in 0..num_layers {
        let weights: Vec<Array2<f64>> = (0..num_passes)
            .map(|_| {
                let mut w = glorot_uniform(d, d, &mut rng);
                normalize_spectral(&mut w);
                w
            })
            .collect();
        let h = states.last().expect("non-empty by construction");
        let next = match kind {
            LayerKind::Gcn => gcn_forward(gm, h, &weights[0], Activation::Identity)?,
            LayerKind::Framelet => framelet_conv_forward(
                sys.expect("checked above"),
                gm,
                h,
                &weights,
                Activation::Identity,
            )?,
            LayerKind::EeConv => eeconv_forward(
                sys.expect("checked above"),
                pair.as_ref().expect("pair built above"),
                h,
                &weights,
                Activation::Identity,
            )?,
        };
        states.push(next);
    }
    Ok(states)
}
