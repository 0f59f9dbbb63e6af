use approx::assert_abs_diff_eq;
use framelet::frames::build_default_system;
use framelet::graph::{assign_split, build_matrices, sbm_generate, Graph, SbmConfig};
use framelet::nn::{
    accuracy, adam_step, backward, build_augmented_pair, cross_entropy_loss, eeconv_forward,
    equivariance_check, framelet_conv_forward, gcn_forward, load_checkpoint, model_forward,
    save_checkpoint, softmax_rows, depth_energy_trajectory, Activation, Gradients, LayerKind,
    ModelArtifacts, ModelConfig, ModelState, TrainConfig,
};
use framelet::nn::train;
use framelet::spectral::eigendecompose;
use framelet::Error;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p2() -> Graph<f64> {
    Graph::new(2, vec![(0, 1, 1.0)], array![[1.0], [0.0]]).unwrap()
}

fn k3() -> Graph<f64> {
    Graph::new(
        3,
        vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)],
        Array2::zeros((3, 1)),
    )
    .unwrap()
}

fn edgeless(n: usize, d: usize) -> Graph<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xED);
    Graph::new(n, vec![], Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))).unwrap()
}

fn sbm(nodes_per_block: usize, p: f64, q: f64, seed: u64) -> Graph<f64> {
    sbm_generate(&SbmConfig::<f64>::two_block(nodes_per_block, p, q, seed)).unwrap()
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().map(|v| v.abs()).fold(0.0, f64::max)
}

#[test]
fn pair_with_zero_epsilon_degenerates_to_a_hat() {
    let gm = build_matrices(&k3()).unwrap();
    let pair = build_augmented_pair(&gm, 0.0).unwrap();
    assert_eq!(pair.a_low, gm.a_hat);
    assert_eq!(pair.a_high, gm.a_hat);
}

#[test]
fn pair_on_p2_shifts_the_spectrum_by_a_tenth() {
    let gm = build_matrices(&p2()).unwrap();
    let pair = build_augmented_pair(&gm, 0.2).unwrap();
    // D̃ = 2I, so the diagonal shift is 0.2/2 = 0.1.
    let expected_high = array![[0.6, 0.5], [0.5, 0.6]];
    assert!(max_abs_diff(&pair.a_high, &expected_high) <= 1e-15);

    let eig = eigendecompose(&pair.a_high).unwrap();
    assert_abs_diff_eq!(eig.eigenvalues[0], 0.1, epsilon = 1e-12);
    assert_abs_diff_eq!(eig.eigenvalues[1], 1.1, epsilon = 1e-12);

    let sum = &pair.a_low + &pair.a_high;
    let twice = gm.a_hat.mapv(|v| 2.0 * v);
    assert!(max_abs_diff(&sum, &twice) <= 1e-12);
}

#[test]
fn pair_rejects_negative_epsilon() {
    let gm = build_matrices(&p2()).unwrap();
    assert!(matches!(
        build_augmented_pair(&gm, -0.1),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn eigenvalue_sandwich_and_epsilon_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5A);
    let eps_grid = [0.01, 0.05, 0.1, 0.5];
    for trial in 0..20 {
        let g = sbm(rng.gen_range(3..=10), rng.gen_range(0.3..0.8), rng.gen_range(0.1..0.4), trial);
        let gm = build_matrices(&g).unwrap();
        let base = eigendecompose(&gm.a_hat).unwrap().eigenvalues;

        let mut previous_high: Option<Vec<f64>> = None;
        for &eps in &eps_grid {
            let pair = build_augmented_pair(&gm, eps).unwrap();
            let low = eigendecompose(&pair.a_low).unwrap().eigenvalues;
            let high = eigendecompose(&pair.a_high).unwrap().eigenvalues;
            for k in 0..gm.num_nodes {
                assert!(
                    low[k] <= base[k] + 1e-9 && base[k] <= high[k] + 1e-9,
                    "trial {trial}, eps {eps}, k {k}: {} / {} / {}",
                    low[k],
                    base[k],
                    high[k]
                );
            }
            // The high shift grows with ε, eigenvalue by eigenvalue.
            if let Some(prev) = &previous_high {
                for k in 0..gm.num_nodes {
                    assert!(high[k] >= prev[k] - 1e-9, "trial {trial}: not monotone in eps");
                }
            }
            previous_high = Some(high.to_vec());
        }
    }
}

#[test]
fn gcn_forward_examples() {
    // Null-space inputs are fixed points with identity weights.
    let gm = build_matrices(&sbm(5, 0.6, 0.3, 7)).unwrap();
    let n = gm.num_nodes;
    let smooth = Array2::from_shape_fn((n, 2), |(i, c)| {
        gm.deg_tilde[i].sqrt() * (c as f64 + 1.0)
    });
    let out = gcn_forward(&gm, &smooth, &Array2::eye(2), Activation::Identity).unwrap();
    assert!(max_abs_diff(&out, &smooth) <= 1e-12);

    let p2m = build_matrices(&p2()).unwrap();
    let h = array![[1.0], [0.0]];
    let out = gcn_forward(&p2m, &h, &array![[1.0]], Activation::Identity).unwrap();
    assert!(max_abs_diff(&out, &array![[0.5], [0.5]]) <= 1e-15);

    let zeroed = gcn_forward(&p2m, &h, &array![[0.0]], Activation::Relu).unwrap();
    assert_eq!(zeroed.iter().map(|v| v.abs()).fold(0.0, f64::max), 0.0);

    assert!(gcn_forward(&p2m, &h, &Array2::eye(2), Activation::Relu).is_err());
}

#[test]
fn framelet_conv_is_identity_on_edgeless_graphs() {
    let g = edgeless(3, 2);
    let gm = build_matrices(&g).unwrap();
    let sys = build_default_system(&gm).unwrap();
    let weights = vec![Array2::eye(2); sys.num_passes()];
    let out = framelet_conv_forward(&sys, &gm, &g.features, &weights, Activation::Identity).unwrap();
    assert!(max_abs_diff(&out, &g.features) <= 1e-12);
}

#[test]
fn framelet_conv_with_zero_weights_is_zero() {
    let gm = build_matrices(&k3()).unwrap();
    let sys = build_default_system(&gm).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = random_signal(&mut rng, 3, 2);
    let weights = vec![Array2::zeros((2, 2)); sys.num_passes()];
    let out = framelet_conv_forward(&sys, &gm, &h, &weights, Activation::Relu).unwrap();
    assert_eq!(out.iter().map(|v| v.abs()).fold(0.0, f64::max), 0.0);
}

#[test]
fn framelet_conv_matches_dense_assembly() {
    let gm = build_matrices(&k3()).unwrap();
    let sys = build_default_system(&gm).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let h = random_signal(&mut rng, 3, 2);
    let weights = vec![Array2::eye(2); sys.num_passes()];
    let out = framelet_conv_forward(&sys, &gm, &h, &weights, Activation::Identity).unwrap();

    let ops = sys.operators().unwrap();
    let mut expected = Array2::zeros((3, 2));
    for w in ops {
        expected = expected + w.t().dot(&gm.a_hat).dot(w).dot(&h);
    }
    assert!(max_abs_diff(&out, &expected) <= 1e-12);
}

#[test]
fn framelet_conv_rejects_pass_count_mismatch() {
    let gm = build_matrices(&k3()).unwrap();
    let sys = build_default_system(&gm).unwrap();
    let h = Array2::<f64>::zeros((3, 2));
    let weights = vec![Array2::eye(2); 2];
    assert!(framelet_conv_forward(&sys, &gm, &h, &weights, Activation::Relu).is_err());
}

#[test]
fn eeconv_with_zero_epsilon_is_framelet_conv_bitwise() {
    let gm = build_matrices(&sbm(4, 0.6, 0.3, 12)).unwrap();
    let sys = build_default_system(&gm).unwrap();
    let pair = build_augmented_pair(&gm, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xEE);
    let h = random_signal(&mut rng, gm.num_nodes, 3);
    let weights: Vec<Array2<f64>> =
        (0..sys.num_passes()).map(|_| random_signal(&mut rng, 3, 3)).collect();

    let ee = eeconv_forward(&sys, &pair, &h, &weights, Activation::Relu).unwrap();
    let fr = framelet_conv_forward(&sys, &gm, &h, &weights, Activation::Relu).unwrap();
    assert_eq!(ee, fr);
}

#[test]
fn eeconv_closed_form_on_edgeless_graph() {
    let g = edgeless(3, 2);
    let gm = build_matrices(&g).unwrap();
    let sys = build_default_system(&gm).unwrap();
    let pair = build_augmented_pair(&gm, 0.3).unwrap();
    let weights = vec![Array2::eye(2); sys.num_passes()];
    let out = eeconv_forward(&sys, &pair, &g.features, &weights, Activation::Identity).unwrap();

    // With Â = D̃ = I the low pass scales by 1−ε and the highs by 1+ε.
    let ops = sys.operators().unwrap();
    let mut expected: Array2<f64> = ops[0].t().dot(&ops[0]).dot(&g.features) * 0.7;
    for w in &ops[1..] {
        expected = expected + w.t().dot(w).dot(&g.features) * 1.3;
    }
    assert!(max_abs_diff(&out, &expected) <= 1e-12);
    // The high transforms vanish at λ=0, so the whole layer is 0.7·h.
    assert!(max_abs_diff(&out, &g.features.mapv(|v| 0.7 * v)) <= 1e-12);
}

#[test]
fn model_forward_is_deterministic_and_softmax_normalizes() {
    let g = sbm(5, 0.6, 0.2, 9);
    let gm = build_matrices(&g).unwrap();
    let config = ModelConfig::<f64>::new(LayerKind::Framelet, 2, 31);
    let art = ModelArtifacts::build(gm, &config).unwrap();
    let state = ModelState::init(&config, g.feature_dim(), 2, art.num_passes()).unwrap();

    let (l1, _) = model_forward(&state, &config, &art, &g.features, None).unwrap();
    let (l2, _) = model_forward(&state, &config, &art, &g.features, None).unwrap();
    assert_eq!(l1, l2);

    let probs = softmax_rows(&l1);
    for row in probs.rows() {
        let s: f64 = row.iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
    }
}

#[test]
fn dropout_draws_from_the_supplied_stream() {
    let g = sbm(5, 0.6, 0.2, 9);
    let gm = build_matrices(&g).unwrap();
    let mut config = ModelConfig::<f64>::new(LayerKind::Gcn, 2, 77);
    config.dropout_rate = 0.5;
    let art = ModelArtifacts::build(gm, &config).unwrap();
    let state = ModelState::init(&config, g.feature_dim(), 2, art.num_passes()).unwrap();

    let mut rng_a = ChaCha8Rng::seed_from_u64(1);
    let mut rng_b = ChaCha8Rng::seed_from_u64(1);
    let (a, trace) = model_forward(&state, &config, &art, &g.features, Some(&mut rng_a)).unwrap();
    let (b, _) = model_forward(&state, &config, &art, &g.features, Some(&mut rng_b)).unwrap();
    assert_eq!(a, b);
    assert!(trace.masks.iter().all(|m| m.is_some()));

    // Evaluation path: no RNG, no masks, different output than the
    // dropped-out run (overwhelmingly, for this seed).
    let (eval, eval_trace) = model_forward(&state, &config, &art, &g.features, None).unwrap();
    assert!(eval_trace.masks.iter().all(|m| m.is_none()));
    assert!(max_abs_diff(&eval, &a) > 1e-8);
}

#[test]
fn single_identity_layer_reduces_to_the_readout() {
    let g = edgeless(4, 3);
    let gm = build_matrices(&g).unwrap();
    let mut config = ModelConfig::<f64>::new(LayerKind::Framelet, 1, 5);
    config.hidden_dim = 3;
    config.activation = Activation::Identity;
    let art = ModelArtifacts::build(gm, &config).unwrap();
    let mut state = ModelState::init(&config, 3, 2, art.num_passes()).unwrap();
    state.input_proj = Array2::eye(3);
    for w in &mut state.layers[0] {
        *w = Array2::eye(3);
    }

    let (logits, _) = model_forward(&state, &config, &art, &g.features, None).unwrap();
    let expected = g.features.dot(&state.readout);
    assert!(max_abs_diff(&logits, &expected) <= 1e-12);
}

#[test]
fn cross_entropy_reference_values() {
    // Uniform logits: loss is ln C regardless of the labels.
    let logits = Array2::<f64>::zeros((4, 3));
    let labels = vec![0, 1, 2, 0];
    let mask = vec![true; 4];
    let (loss, _) = cross_entropy_loss(&logits, &labels, &mask).unwrap();
    assert_abs_diff_eq!(loss, 3.0f64.ln(), epsilon = 1e-12);

    // A 50-logit margin drives the loss to the exp(-50) floor.
    let mut confident = Array2::<f64>::zeros((2, 2));
    confident[(0, 0)] = 50.0;
    confident[(1, 1)] = 50.0;
    let (loss, _) = cross_entropy_loss(&confident, &vec![0, 1], &vec![true, true]).unwrap();
    assert!(loss <= 1e-20, "loss {loss}");

    assert!(cross_entropy_loss(&logits, &labels, &vec![false; 4]).is_err());
    assert!(cross_entropy_loss(&logits, &vec![9, 0, 0, 0], &mask).is_err());
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCE);
    let logits = random_signal(&mut rng, 3, 4);
    let labels = vec![2, 0, 3];
    let mask = vec![true, false, true];
    let (_, grad) = cross_entropy_loss(&logits, &labels, &mask).unwrap();

    let step = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..3 {
        for k in 0..4 {
            let mut plus = logits.clone();
            plus[(i, k)] += step;
            let mut minus = logits.clone();
            minus[(i, k)] -= step;
            let (lp, _) = cross_entropy_loss(&plus, &labels, &mask).unwrap();
            let (lm, _) = cross_entropy_loss(&minus, &labels, &mask).unwrap();
            let fd = (lp - lm) / (2.0 * step);
            let denom = fd.abs().max(grad[(i, k)].abs()).max(1e-8);
            worst = worst.max((fd - grad[(i, k)]).abs() / denom);
        }
    }
    assert!(worst <= 1e-6, "max relative error {worst}");
}

/// Parameter slots in canonical order, for gradient checking.
enum Slot {
    Proj,
    Layer(usize, usize),
    Readout,
    Bias,
}

fn slots(state: &ModelState<f64>) -> Vec<Slot> {
    let mut out = vec![Slot::Proj];
    for l in 0..state.num_layers() {
        for i in 0..state.layers[l].len() {
            out.push(Slot::Layer(l, i));
        }
    }
    out.push(Slot::Readout);
    out.push(Slot::Bias);
    out
}

fn tensor_mut<'a>(state: &'a mut ModelState<f64>, slot: &Slot) -> &'a mut Array2<f64> {
    match slot {
        Slot::Proj => &mut state.input_proj,
        Slot::Layer(l, i) => &mut state.layers[*l][*i],
        Slot::Readout => &mut state.readout,
        Slot::Bias => &mut state.readout_bias,
    }
}

fn tensor_of<'a>(g: &'a Gradients<f64>, slot: &Slot) -> &'a Array2<f64> {
    match slot {
        Slot::Proj => &g.input_proj,
        Slot::Layer(l, i) => &g.layers[*l][*i],
        Slot::Readout => &g.readout,
        Slot::Bias => &g.readout_bias,
    }
}

fn gradcheck_graph() -> Graph<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6C);
    Graph::new(
        6,
        vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0), (0, 5, 1.0), (1, 4, 1.0)],
        Array2::from_shape_fn((6, 3), |_| rng.gen_range(-1.0..1.0)),
    )
    .unwrap()
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let g = gradcheck_graph();
    let labels = vec![0usize, 1, 0, 1, 1, 0];
    let mask = vec![true; 6];

    for kind in [LayerKind::Gcn, LayerKind::Framelet, LayerKind::EeConv] {
        let mut config = ModelConfig::<f64>::new(kind, 2, 0x11);
        config.hidden_dim = 4;
        let art = ModelArtifacts::build(build_matrices(&g).unwrap(), &config).unwrap();
        let mut state = ModelState::init(&config, 3, 2, art.num_passes()).unwrap();

        let (logits, trace) = model_forward(&state, &config, &art, &g.features, None).unwrap();
        let (_, dlogits) = cross_entropy_loss(&logits, &labels, &mask).unwrap();
        let grads = backward(&state, &config, &art, &g.features, &trace, &dlogits).unwrap();

        let step = 1e-5;
        let mut worst = 0.0f64;
        for slot in slots(&state) {
            let (rows, cols) = {
                let t = tensor_mut(&mut state, &slot);
                (t.nrows(), t.ncols())
            };
            for r in 0..rows {
                for c in 0..cols {
                    let orig = tensor_mut(&mut state, &slot)[(r, c)];
                    let eval = |state: &ModelState<f64>| -> f64 {
                        let (lg, _) = model_forward(state, &config, &art, &g.features, None).unwrap();
                        cross_entropy_loss(&lg, &labels, &mask).unwrap().0
                    };
                    tensor_mut(&mut state, &slot)[(r, c)] = orig + step;
                    let lp = eval(&state);
                    tensor_mut(&mut state, &slot)[(r, c)] = orig - step;
                    let lm = eval(&state);
                    tensor_mut(&mut state, &slot)[(r, c)] = orig;

                    let fd = (lp - lm) / (2.0 * step);
                    let an = tensor_of(&grads, &slot)[(r, c)];
                    let denom = fd.abs().max(an.abs()).max(1e-6);
                    worst = worst.max((fd - an).abs() / denom);
                }
            }
        }
        assert!(worst <= 1e-4, "{kind:?}: max relative gradient error {worst}");
    }
}

#[test]
fn backward_of_zero_loss_gradient_is_zero() {
    let g = gradcheck_graph();
    let config = ModelConfig::<f64>::new(LayerKind::EeConv, 2, 3);
    let art = ModelArtifacts::build(build_matrices(&g).unwrap(), &config).unwrap();
    let state = ModelState::init(&config, 3, 2, art.num_passes()).unwrap();
    let (_, trace) = model_forward(&state, &config, &art, &g.features, None).unwrap();
    let grads =
        backward(&state, &config, &art, &g.features, &trace, &Array2::zeros((6, 2))).unwrap();
    for slot in slots(&state) {
        assert_eq!(tensor_of(&grads, &slot).iter().map(|v| v.abs()).fold(0.0, f64::max), 0.0);
    }
}

#[test]
fn backward_is_linear_in_the_loss_gradient() {
    let g = gradcheck_graph();
    let config = ModelConfig::<f64>::new(LayerKind::Framelet, 2, 8);
    let art = ModelArtifacts::build(build_matrices(&g).unwrap(), &config).unwrap();
    let state = ModelState::init(&config, 3, 2, art.num_passes()).unwrap();
    let (_, trace) = model_forward(&state, &config, &art, &g.features, None).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(0x22);
    let d1 = random_signal(&mut rng, 6, 2);
    let d2 = random_signal(&mut rng, 6, 2);
    let sum = &d1 + &d2;
    let g1 = backward(&state, &config, &art, &g.features, &trace, &d1).unwrap();
    let g2 = backward(&state, &config, &art, &g.features, &trace, &d2).unwrap();
    let gs = backward(&state, &config, &art, &g.features, &trace, &sum).unwrap();
    for slot in slots(&state) {
        let combined = tensor_of(&g1, &slot) + tensor_of(&g2, &slot);
        assert!(max_abs_diff(&combined, tensor_of(&gs, &slot)) <= 1e-12);
    }
}

#[test]
fn backward_rejects_a_stale_trace() {
    let g = gradcheck_graph();
    let config = ModelConfig::<f64>::new(LayerKind::Gcn, 2, 3);
    let art = ModelArtifacts::build(build_matrices(&g).unwrap(), &config).unwrap();
    let state = ModelState::init(&config, 3, 2, art.num_passes()).unwrap();
    let (_, trace) = model_forward(&state, &config, &art, &g.features, None).unwrap();

    let mut deeper = config.clone();
    deeper.num_layers = 3;
    let deep_art = ModelArtifacts::build(build_matrices(&g).unwrap(), &deeper).unwrap();
    let deep_state = ModelState::init(&deeper, 3, 2, deep_art.num_passes()).unwrap();
    let err = backward(&deep_state, &deeper, &deep_art, &g.features, &trace, &Array2::zeros((6, 2)))
        .unwrap_err();
    assert!(err.to_string().contains("trace"), "{err}");
}

fn tiny_state() -> (ModelConfig<f64>, ModelState<f64>) {
    let mut config = ModelConfig::<f64>::new(LayerKind::Gcn, 1, 0);
    config.hidden_dim = 1;
    let state = ModelState::init(&config, 1, 1, 1).unwrap();
    (config, state)
}

#[test]
fn adam_first_step_moves_by_the_learning_rate() {
    let (_, mut state) = tiny_state();
    let before = state.clone();
    let mut grads = Gradients {
        input_proj: Array2::zeros((1, 1)),
        layers: vec![vec![Array2::zeros((1, 1))]],
        readout: Array2::zeros((1, 1)),
        readout_bias: Array2::zeros((1, 1)),
    };
    grads.layers[0][0][(0, 0)] = 1.0;
    adam_step(&mut state, &grads, 0.1, (0.9, 0.999), 0.0).unwrap();
    // Bias correction makes the first step exactly lr·g/(|g| + eps').
    let moved = before.layers[0][0][(0, 0)] - state.layers[0][0][(0, 0)];
    assert_abs_diff_eq!(moved, 0.1, epsilon = 1e-8);
    assert_eq!(state.adam.step, 1);
    // Parameters with zero gradient stay put.
    assert_eq!(state.input_proj, before.input_proj);
    assert_eq!(state.readout, before.readout);
}

#[test]
fn adam_zero_gradient_zero_decay_is_a_no_op() {
    let (_, mut state) = tiny_state();
    let before = state.clone();
    let grads = Gradients {
        input_proj: Array2::zeros((1, 1)),
        layers: vec![vec![Array2::zeros((1, 1))]],
        readout: Array2::zeros((1, 1)),
        readout_bias: Array2::zeros((1, 1)),
    };
    adam_step(&mut state, &grads, 0.1, (0.9, 0.999), 0.0).unwrap();
    assert_eq!(state.input_proj, before.input_proj);
    assert_eq!(state.layers[0][0], before.layers[0][0]);
    assert_eq!(state.readout, before.readout);
}

#[test]
fn adam_weight_decay_shrinks_weights() {
    let (_, mut state) = tiny_state();
    let before = state.layers[0][0][(0, 0)];
    let grads = Gradients {
        input_proj: Array2::zeros((1, 1)),
        layers: vec![vec![Array2::zeros((1, 1))]],
        readout: Array2::zeros((1, 1)),
        readout_bias: Array2::zeros((1, 1)),
    };
    adam_step(&mut state, &grads, 0.1, (0.9, 0.999), 0.5).unwrap();
    let after = state.layers[0][0][(0, 0)];
    assert_abs_diff_eq!(after, before * (1.0 - 0.1 * 0.5), epsilon = 1e-15);
    assert!(after.abs() < before.abs());
}

#[test]
fn adam_rejects_non_finite_gradients_by_name() {
    let (_, mut state) = tiny_state();
    let mut grads = Gradients {
        input_proj: Array2::zeros((1, 1)),
        layers: vec![vec![Array2::zeros((1, 1))]],
        readout: Array2::zeros((1, 1)),
        readout_bias: Array2::zeros((1, 1)),
    };
    grads.layers[0][0][(0, 0)] = f64::NAN;
    let err = adam_step(&mut state, &grads, 0.1, (0.9, 0.999), 0.0).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)));
    assert!(err.to_string().contains("layer0.pass0"), "{err}");
}

fn labeled_split_sbm(seed: u64) -> Graph<f64> {
    let mut g = sbm(50, 0.5, 0.05, seed);
    assign_split(&mut g, 0.6, 0.2, seed.wrapping_add(1)).unwrap();
    g
}

#[test]
fn training_separates_the_two_blocks() {
    let g = labeled_split_sbm(0x7);
    let config = ModelConfig::<f64>::new(LayerKind::EeConv, 2, 41);
    let tc = TrainConfig::default();
    let result = train(&g, &config, &tc).unwrap();
    let last = result.history.last().unwrap();
    assert!(last.train_acc >= 0.95, "train accuracy {}", last.train_acc);
    assert_eq!(last.epoch, 300);
}

#[test]
fn zero_learning_rate_freezes_the_metrics() {
    let g = labeled_split_sbm(5);
    let config = ModelConfig::<f64>::new(LayerKind::Gcn, 2, 13);
    let tc = TrainConfig { lr: 0.0, weight_decay: 0.0, epochs: 30, ..TrainConfig::default() };
    let result = train(&g, &config, &tc).unwrap();
    assert_eq!(result.history.len(), 3);
    let first = &result.history[0];
    for m in &result.history {
        assert_eq!(m.loss, first.loss);
        assert_eq!(m.train_acc, first.train_acc);
        assert_eq!(m.val_acc, first.val_acc);
    }
}

#[test]
fn training_is_reproducible_for_a_fixed_seed() {
    let g = labeled_split_sbm(6);
    let mut config = ModelConfig::<f64>::new(LayerKind::Framelet, 2, 29);
    config.dropout_rate = 0.3;
    let tc = TrainConfig { epochs: 30, ..TrainConfig::default() };
    let a = train(&g, &config, &tc).unwrap();
    let b = train(&g, &config, &tc).unwrap();
    assert_eq!(a.history.len(), b.history.len());
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!(x.loss, y.loss);
        assert_eq!(x.train_acc, y.train_acc);
        assert_eq!(x.val_acc, y.val_acc);
        assert_eq!(x.test_acc, y.test_acc);
    }
}

#[test]
fn training_requires_labels_and_split() {
    let bare = sbm(4, 0.5, 0.2, 3);
    let labels = bare.labels.clone().unwrap();
    let unlabeled = Graph::new(bare.num_nodes, bare.edges.clone(), bare.features.clone()).unwrap();
    let config = ModelConfig::<f64>::new(LayerKind::Gcn, 1, 1);
    let tc = TrainConfig { epochs: 1, ..TrainConfig::default() };
    assert!(train(&unlabeled, &config, &tc).is_err());

    let labeled = Graph::new(bare.num_nodes, bare.edges.clone(), bare.features.clone())
        .unwrap()
        .with_labels(labels)
        .unwrap();
    assert!(train(&labeled, &config, &tc).is_err());
}

#[test]
fn train_records_energy_history_when_asked() {
    let g = labeled_split_sbm(8);
    let config = ModelConfig::<f64>::new(LayerKind::EeConv, 2, 15);
    let tc = TrainConfig { epochs: 10, record_energy: true, ..TrainConfig::default() };
    let result = train(&g, &config, &tc).unwrap();
    assert_eq!(result.energy_history.len(), 1);
    let reports = &result.energy_history[0].reports;
    assert_eq!(reports.len(), 2);
    for r in reports {
        assert_eq!(r.per_pass.len(), 3);
    }
}

#[test]
fn equivariance_examples() {
    // Identity permutation: both sides run the same arithmetic.
    let g = sbm(4, 0.6, 0.2, 2);
    let config = ModelConfig::<f64>::new(LayerKind::EeConv, 2, 10);
    let identity: Vec<usize> = (0..g.num_nodes).collect();
    assert_eq!(equivariance_check(&config, &g, &identity).unwrap(), 0.0);

    // P2 swap.
    let swap = equivariance_check(&config, &p2(), &[1, 0]).unwrap();
    assert!(swap <= 1e-9, "deviation {swap}");
}

#[test]
fn equivariance_over_random_permutations_all_kinds() {
    let g = sbm(8, 0.5, 0.2, 31);
    assert_eq!(g.num_nodes, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9);
    for kind in [LayerKind::Gcn, LayerKind::Framelet, LayerKind::EeConv] {
        let config = ModelConfig::<f64>::new(kind, 2, 23);
        for trial in 0..50 {
            let mut perm: Vec<usize> = (0..16).collect();
            for i in (1..16).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let dev = equivariance_check(&config, &g, &perm).unwrap();
            assert!(dev <= 1e-8, "{kind:?} trial {trial}: deviation {dev}");
        }
    }
}

#[test]
fn depth_dynamics_gcn_collapses_eeconv_retains_energy() {
    let g = sbm(50, 0.5, 0.5, 0xD0);
    let gm = build_matrices(&g).unwrap();
    assert_eq!(gm.num_components(), 1);
    let sys = build_default_system(&gm).unwrap();

    let gcn = depth_energy_trajectory(&gm, None, LayerKind::Gcn, 0.0, &g.features, 32, 7).unwrap();
    let ee = depth_energy_trajectory(
        &gm,
        Some(&sys),
        LayerKind::EeConv,
        0.1,
        &g.features,
        32,
        7,
    )
    .unwrap();
    assert_eq!(gcn.len(), 33);
    assert_eq!(ee.len(), 33);

    // Unit-spectral weights and λ < 1 make each GCN layer non-expanding in
    // energy, collapsing by many orders over 32 layers.
    for l in 0..32 {
        assert!(gcn[l + 1] <= gcn[l] * (1.0 + 1e-12) + 1e-300, "layer {l} grew");
    }
    assert!(
        gcn[0] / gcn[32].max(1e-300) >= 1e6,
        "GCN decay only {:e}",
        gcn[0] / gcn[32]
    );
    assert!(
        ee[32] >= 1e3 * gcn[32],
        "EEConv end energy {:e} not well above GCN {:e}",
        ee[32],
        gcn[32]
    );
}

#[test]
fn checkpoints_round_trip_exactly() {
    let dir = std::env::temp_dir().join("framelet-nn-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("ckpt.json");

    let g = labeled_split_sbm(10);
    let mut config = ModelConfig::<f64>::new(LayerKind::EeConv, 2, 55);
    config.hidden_dim = 8;
    let tc = TrainConfig { epochs: 5, eval_every: 5, ..TrainConfig::default() };
    let trained = train(&g, &config, &tc).unwrap();
    save_checkpoint(&trained.state, &config, &path).unwrap();

    let (loaded_config, loaded_state) = load_checkpoint::<f64>(&path).unwrap();
    assert_eq!(loaded_config.num_layers, 2);
    assert_eq!(loaded_config.hidden_dim, 8);
    assert_eq!(loaded_state.adam.step, trained.state.adam.step);
    assert_eq!(loaded_state.input_proj, trained.state.input_proj);
    for (a, b) in loaded_state.layers.iter().flatten().zip(trained.state.layers.iter().flatten()) {
        assert_eq!(a, b);
    }
    assert_eq!(loaded_state.adam.m.readout, trained.state.adam.m.readout);

    // Same logits from the restored state.
    let art = ModelArtifacts::build(build_matrices(&g).unwrap(), &config).unwrap();
    let (l1, _) = model_forward(&trained.state, &config, &art, &g.features, None).unwrap();
    let (l2, _) = model_forward(&loaded_state, &loaded_config, &art, &g.features, None).unwrap();
    assert_eq!(l1, l2);

    // The raw document carries the documented keys.
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["input_proj", "layer0.pass0", "layer1.pass2", "readout", "readout_bias"] {
        assert!(doc["weights"].get(key).is_some(), "missing {key}");
    }
    assert_eq!(doc["step"], serde_json::json!(trained.state.adam.step));
    std::fs::remove_file(&path).ok();
}

#[test]
fn config_validation_rejects_bad_values() {
    let mut c = ModelConfig::<f64>::new(LayerKind::Gcn, 0, 1);
    assert!(c.validate().is_err());
    c.num_layers = 1;
    c.hidden_dim = 0;
    assert!(c.validate().is_err());
    c.hidden_dim = 4;
    c.dropout_rate = 1.0;
    assert!(c.validate().is_err());
    c.dropout_rate = 0.0;
    c.epsilon = -0.2;
    assert!(c.validate().is_err());
    c.epsilon = 0.0;
    assert!(c.validate().is_ok());
}

#[test]
fn accuracy_counts_masked_hits() {
    let logits = array![[2.0, 1.0], [0.0, 3.0], [1.0, 0.0]];
    let labels = vec![0, 1, 1];
    assert_eq!(accuracy(&logits, &labels, &[true, true, true]), 2.0 / 3.0);
    assert_eq!(accuracy(&logits, &labels, &[true, true, false]), 1.0);
    assert_eq!(accuracy(&logits, &labels, &[false, false, false]), 0.0);
}
