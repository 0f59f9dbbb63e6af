use approx::assert_abs_diff_eq;
use framelet::graph::{build_matrices, sbm_generate, Graph, SbmConfig};
use framelet::spectral::{
    chebyshev_fit, eigendecompose, lambda_max_estimate, spectral_norm, ChebyshevFilter,
};
use framelet::Error;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p2_laplacian() -> Array2<f64> {
    let g = Graph::new(2, vec![(0, 1, 1.0)], Array2::zeros((2, 1))).unwrap();
    build_matrices(&g).unwrap().laplacian
}

fn k3_laplacian() -> Array2<f64> {
    let g = Graph::new(
        3,
        vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)],
        Array2::zeros((3, 1)),
    )
    .unwrap();
    build_matrices(&g).unwrap().laplacian
}

fn sbm_laplacian(seed: u64) -> Array2<f64> {
    let g = sbm_generate(&SbmConfig::<f64>::two_block(15, 0.5, 0.1, seed)).unwrap();
    build_matrices(&g).unwrap().laplacian
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-1.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[test]
fn diagonal_matrix_eigenpairs() {
    let eig = eigendecompose(&array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
    assert_eq!(eig.eigenvalues.to_vec(), vec![1.0, 2.0, 3.0]);
    // Axis eigenvectors, reordered to match the sorted eigenvalues and
    // sign-fixed positive.
    let expected = array![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    for (a, e) in eig.eigenvectors.iter().zip(expected.iter()) {
        assert_abs_diff_eq!(a, e, epsilon = 1e-14);
    }
}

#[test]
fn p2_laplacian_eigenpairs() {
    let eig = eigendecompose(&p2_laplacian()).unwrap();
    assert_abs_diff_eq!(eig.eigenvalues[0], 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(eig.eigenvalues[1], 1.0, epsilon = 1e-14);
    let s = 0.5f64.sqrt();
    let expected = array![[s, s], [s, -s]];
    for (a, e) in eig.eigenvectors.iter().zip(expected.iter()) {
        assert_abs_diff_eq!(a, e, epsilon = 1e-12);
    }
}

#[test]
fn k3_laplacian_eigenvalues() {
    let eig = eigendecompose(&k3_laplacian()).unwrap();
    for (l, e) in eig.eigenvalues.iter().zip([0.0, 1.0, 1.0]) {
        assert_abs_diff_eq!(l, &e, epsilon = 1e-12);
    }
}

#[test]
fn eigendecompose_rejects_asymmetric() {
    let err = eigendecompose(&array![[0.0, 1.0], [0.0, 0.0]]).unwrap_err();
    assert!(matches!(err, Error::NotSymmetric { i: 0, j: 1, .. }), "{err}");
}

#[test]
fn eigendecompose_rejects_empty_and_rectangular() {
    assert!(eigendecompose(&Array2::<f64>::zeros((0, 0))).is_err());
    assert!(eigendecompose(&Array2::<f64>::zeros((2, 3))).is_err());
}

#[test]
fn eigen_invariants_on_random_symmetric_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE16);
    for trial in 0..50 {
        let n = rng.gen_range(2..=64);
        let m = random_symmetric(&mut rng, n);
        let eig = eigendecompose(&m).unwrap();

        for k in 1..n {
            assert!(
                eig.eigenvalues[k] >= eig.eigenvalues[k - 1],
                "trial {trial}: eigenvalues not ascending"
            );
        }
        let u = &eig.eigenvectors;
        let gram = u.t().dot(u);
        let eye = Array2::<f64>::eye(n);
        assert!(
            max_abs(&(&gram - &eye)) <= 1e-8,
            "trial {trial}: columns not orthonormal"
        );
        let mut ul = u.clone();
        for (k, mut col) in ul.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * eig.eigenvalues[k]);
        }
        let residual = max_abs(&(&m.dot(u) - &ul));
        assert!(
            residual <= 1e-7 * max_abs(&m).max(1.0),
            "trial {trial}: residual {residual}"
        );
    }
}

#[test]
fn dense_limit_refused_with_chebyshev_advice() {
    // f32 keeps the over-limit allocation cheap; the size check fires before
    // any arithmetic.
    let err = eigendecompose(&Array2::<f32>::zeros((5001, 5001))).unwrap_err();
    assert!(matches!(err, Error::DenseLimit { n: 5001, .. }), "{err}");
    assert!(err.to_string().contains("chebyshev"), "{err}");
}

#[test]
fn apply_spectral_identity_matches_matrix_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = random_symmetric(&mut rng, 12);
    let x = Array2::from_shape_fn((12, 3), |_| rng.gen_range(-1.0..1.0));
    let eig = eigendecompose(&m).unwrap();
    let via_spectrum = eig.apply_spectral(|l| l, &x);
    let direct = m.dot(&x);
    assert!(max_abs(&(&via_spectrum - &direct)) <= 1e-10);
}

#[test]
fn lambda_max_zero_matrix() {
    let (est, converged) = lambda_max_estimate(&Array2::<f64>::zeros((3, 3)), 0.01).unwrap();
    assert!(converged);
    assert!(est.abs() <= 0.01);
}

#[test]
fn lambda_max_p2_within_tolerance() {
    let (est, converged) = lambda_max_estimate(&p2_laplacian(), 0.01).unwrap();
    assert!(converged);
    assert!(est >= 1.0 - 1e-9 && est <= 1.01 + 1e-9, "estimate {est}");
}

#[test]
fn lambda_max_bounded_for_normalized_laplacians() {
    let tol = 0.01;
    let mut laps = vec![p2_laplacian(), k3_laplacian()];
    for seed in 0..5 {
        laps.push(sbm_laplacian(seed));
    }
    for lap in &laps {
        let (est, converged) = lambda_max_estimate(lap, tol).unwrap();
        assert!(converged);
        assert!(est <= 2.0 + tol, "estimate {est} exceeds Laplacian bound");
    }
}

#[test]
fn lambda_max_falls_back_on_exhausted_budget() {
    // A rotated near-degenerate spectrum: with tol = 0 the iteration keeps
    // inching toward 1 and never settles, so both starts exhaust the budget
    // and the universal bound comes back flagged as unconverged. The gap is
    // sized so the per-iteration drift stays above one ulp for far more than
    // the iteration budget.
    let (c, s) = (0.8f64, 0.6f64);
    let (l1, l2) = (1.0, 1.0 - 1e-4);
    let m = array![
        [c * c * l1 + s * s * l2, c * s * (l1 - l2)],
        [c * s * (l1 - l2), s * s * l1 + c * c * l2]
    ];
    let (est, converged) = lambda_max_estimate(&m, 0.0).unwrap();
    assert!(!converged);
    assert_eq!(est, 2.0);
}

#[test]
fn spectral_norm_examples() {
    assert_abs_diff_eq!(spectral_norm(&array![[3.0, 0.0], [0.0, -2.0]]).unwrap(), 3.0, epsilon = 1e-12);
    // Rank-one rectangular case: norm is the vector norm.
    assert_abs_diff_eq!(spectral_norm(&array![[3.0], [4.0]]).unwrap(), 5.0, epsilon = 1e-12);
}

#[test]
fn fit_constant_one_is_pure_dc() {
    let filter = chebyshev_fit(|_: f64| 1.0, 8, 2.0, "one").unwrap();
    assert_eq!(filter.coefficients[0], 1.0);
    for c in &filter.coefficients[1..] {
        assert!(c.abs() <= 1e-14, "spurious coefficient {c}");
    }
    assert!(filter.fit_max_error <= 1e-14);
}

#[test]
fn fit_haar_low_pass_converges_fast() {
    let filter =
        chebyshev_fit(|l: f64| (l / 8.0).cos() * (l / 16.0).cos(), 16, 2.0, "g0").unwrap();
    assert_eq!(filter.degree, 16);
    assert_eq!(filter.coefficients.len(), 17);
    assert!(filter.fit_max_error <= 1e-10, "fit error {}", filter.fit_max_error);
}

#[test]
fn fit_linear_is_exact() {
    let filter = chebyshev_fit(|l: f64| l, 1, 2.0, "identity").unwrap();
    assert_abs_diff_eq!(filter.coefficients[0], 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(filter.coefficients[1], 1.0, epsilon = 1e-14);
    for g in 0..100 {
        let lambda = 2.0 * g as f64 / 99.0;
        assert_abs_diff_eq!(filter.evaluate(lambda), lambda, epsilon = 1e-14);
    }
}

#[test]
fn fit_rejects_degree_zero() {
    assert!(matches!(
        chebyshev_fit(|_: f64| 1.0, 0, 2.0, "one"),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn fit_rejects_bad_domain() {
    assert!(chebyshev_fit(|_: f64| 1.0, 4, 0.0, "one").is_err());
    assert!(chebyshev_fit(|_: f64| 1.0, 4, -1.0, "one").is_err());
}

#[test]
fn apply_constant_filter_returns_input_exactly() {
    let filter = ChebyshevFilter {
        coefficients: vec![1.0f64, 0.0],
        degree: 1,
        domain_upper: 2.0,
        target: "one".into(),
        fit_max_error: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
    let y = filter.apply(&k3_laplacian(), &x).unwrap();
    assert_eq!(max_abs(&(&y - &x)), 0.0);
}

#[test]
fn apply_linear_filter_matches_laplacian_action() {
    let filter = chebyshev_fit(|l: f64| l, 1, 2.0, "identity").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for lap in [k3_laplacian(), sbm_laplacian(3)] {
        let n = lap.nrows();
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let y = filter.apply(&lap, &x).unwrap();
        assert!(max_abs(&(&y - &lap.dot(&x))) <= 1e-12);
    }
}

#[test]
fn apply_haar_low_pass_matches_exact_transform() {
    let g0 = |l: f64| (l / 8.0).cos() * (l / 16.0).cos();
    let filter = chebyshev_fit(g0, 16, 2.0, "g0").unwrap();
    let lap = p2_laplacian();
    let x = array![[1.0, -0.3], [0.4, 2.0]];
    let approx_out = filter.apply(&lap, &x).unwrap();
    let exact_out = eigendecompose(&lap).unwrap().apply_spectral(g0, &x);
    let diff = (&approx_out - &exact_out).mapv(|v| v * v).sum().sqrt();
    let scale = exact_out.mapv(|v| v * v).sum().sqrt();
    assert!(diff <= 1e-8 * scale, "relative error {}", diff / scale);
}

#[test]
fn apply_rejects_spectrum_beyond_domain() {
    let filter = chebyshev_fit(|l: f64| l, 3, 0.5, "identity").unwrap();
    let err = filter.apply(&p2_laplacian(), &Array2::zeros((2, 1))).unwrap_err();
    assert!(matches!(err, Error::DomainExceeded { .. }), "{err}");
    assert!(err.to_string().contains("domain_upper"), "{err}");
}

#[test]
fn apply_rejects_shape_mismatch() {
    let filter = chebyshev_fit(|l: f64| l, 2, 2.0, "identity").unwrap();
    assert!(filter.apply(&k3_laplacian(), &Array2::zeros((2, 1))).is_err());
}

#[test]
fn polynomial_filters_reproduce_matrix_polynomials() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x90);
    let lap = sbm_laplacian(9);
    let n = lap.nrows();
    for degree in 1..=5 {
        let coeffs: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let poly = {
            let coeffs = coeffs.clone();
            move |l: f64| coeffs.iter().rev().fold(0.0, |acc, &c| acc * l + c)
        };
        let filter = chebyshev_fit(poly, degree, 2.0, format!("poly{degree}")).unwrap();
        let x = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));

        // Horner on the matrix gives the exact polynomial action.
        let mut exact = &x * coeffs[degree];
        for k in (0..degree).rev() {
            exact = lap.dot(&exact) + &x * coeffs[k];
        }
        let out = filter.apply(&lap, &x).unwrap();
        let diff = max_abs(&(&out - &exact));
        assert!(
            diff <= 1e-12 * max_abs(&exact).max(1.0),
            "degree {degree}: error {diff}"
        );
    }
}

#[test]
fn refinement_is_monotone_for_haar_responses() {
    let responses: [(&str, fn(f64) -> f64); 3] = [
        ("g0", |l| (l / 8.0).cos() * (l / 16.0).cos()),
        ("g1", |l| (l / 16.0).sin()),
        ("g2", |l| (l / 8.0).sin() * (l / 16.0).cos()),
    ];
    for (name, f) in responses {
        let mut previous = f64::INFINITY;
        for degree in [4, 8, 16] {
            let filter = chebyshev_fit(f, degree, 2.0, name).unwrap();
            // The responses are entire, so the fit hits the roundoff floor by
            // degree 8; allow evaluation jitter of that size on top of the
            // monotone trend.
            assert!(
                filter.fit_max_error <= previous + 1e-14,
                "{name}: error grew from {previous} to {} at degree {degree}",
                filter.fit_max_error
            );
            previous = filter.fit_max_error;
        }
    }
}
