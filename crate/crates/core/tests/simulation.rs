//! Simulation and the matrix-MA to scalar-MA reduction.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use svarma::likelihood::VarmaSpec;
use svarma::polyops::ThetaPoly;
use svarma::simulate::{matrix_to_scalar, simulate_matrix_varma, simulate_varma, MatrixVarma, NoiseConfig};

fn eval(poly: &[DMatrix<f64>], z: Complex64) -> DMatrix<Complex64> {
    let k = poly[0].nrows();
    let mut out = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
    let mut power = Complex64::new(1.0, 0.0);
    for c in poly {
        out += c.map(|v| Complex64::new(v, 0.0)) * power;
        power *= z;
    }
    out
}

fn random_matrix_model(rng: &mut rand_chacha::ChaCha8Rng, k: usize, p: usize, q: usize) -> MatrixVarma {
    let poly = |rng: &mut rand_chacha::ChaCha8Rng, deg: usize, scale: f64| {
        let mut out = vec![DMatrix::identity(k, k)];
        out.extend((0..deg).map(|_| normal_matrix(rng, k, k) * scale));
        out
    };
    MatrixVarma::new(poly(rng, q, 0.4), poly(rng, p, 0.3), DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0)), random_omega(rng, k))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn scalar_form_has_the_same_transfer_function(seed in any::<u64>(), k in 1usize..=3, p in 0usize..=2, q in 0usize..=2) {
        let mut rng = rng(seed);
        let model = random_matrix_model(&mut rng, k, p, q);
        let scalar = matrix_to_scalar(&model).unwrap();
        prop_assert!(scalar.transfer_deviation <= 1e-9);
        prop_assert!(scalar.theta.order() <= k * q);
        prop_assert!(scalar.ar.len() <= (k - 1) * q + p + 1);
        // D(z)^{-1} N(z) = A(z)^{-1} theta(z) away from the sampling circle.
        for z in [Complex64::new(0.3, 0.2), Complex64::new(-0.1, 0.6)] {
            let lhs = eval(model.d(), z).try_inverse().unwrap() * eval(model.n(), z);
            let rhs = eval(&scalar.ar, z).try_inverse().unwrap() * scalar.theta.eval(z);
            let diff = (lhs.clone() - rhs).map(|c| c.norm()).amax();
            prop_assert!(diff <= 1e-8 * (1.0 + lhs.map(|c| c.norm()).amax()));
        }
    }
}

#[test]
fn same_seed_same_path() {
    let mut rng = rng(2);
    let spec = random_spec(&mut rng, 3, 2, 2, 0.9);
    let a = simulate_varma(&spec, 500, &NoiseConfig::new(99)).unwrap();
    let b = simulate_varma(&spec, 500, &NoiseConfig::new(99)).unwrap();
    let c = simulate_varma(&spec, 500, &NoiseConfig::new(100)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.values().nrows(), 502);
}

#[test]
fn scalar_and_matrix_paths_agree_for_one_variable() {
    let theta = ThetaPoly::from_tail(&[0.4, -0.2]).unwrap();
    let phi = vec![DMatrix::from_element(1, 1, 0.5)];
    let spec = VarmaSpec::new(theta.clone(), DVector::from_element(1, 0.3), phi.clone(), DMatrix::identity(1, 1)).unwrap();
    let model = MatrixVarma::from_row_form(
        &phi,
        &theta.tail().iter().map(|&v| DMatrix::from_element(1, 1, v)).collect::<Vec<_>>(),
        DVector::from_element(1, 0.3),
        DMatrix::identity(1, 1),
    )
    .unwrap();
    let noise = NoiseConfig { burn_in: Some(60), ..NoiseConfig::new(4) };
    let a = simulate_varma(&spec, 300, &noise).unwrap();
    let b = simulate_matrix_varma(&model, 300, &noise).unwrap();
    assert!((a.values() - b.values()).amax() < 1e-12);
}

#[test]
fn long_run_mean_matches_the_intercept() {
    let phi = vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3])];
    let mu = DVector::from_vec(vec![1.0, -0.5]);
    let spec = VarmaSpec::new(ThetaPoly::from_tail(&[0.3]).unwrap(), mu.clone(), phi.clone(), DMatrix::identity(2, 2)).unwrap();
    let x = simulate_varma(&spec, 40_000, &NoiseConfig::new(8)).unwrap();
    let mean = x.values().row_mean();
    // Row convention: m' = mu' (I - Phi_1)^{-1}.
    let expected = mu.transpose() * (DMatrix::identity(2, 2) - &phi[0]).try_inverse().unwrap();
    assert!((mean - expected).amax() < 0.05);
}
