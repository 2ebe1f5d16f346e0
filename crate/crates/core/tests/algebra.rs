//! Property tests for the polynomial, kernel and root machinery against
//! dense reference computations.

mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use svarma::kernel::{build_kernel, build_lambda, build_sigma, szego_limit};
use svarma::oracle::{dense_k_matrix, dense_theta};
use svarma::polyops::{invert_series, theta_inverse_lags, toeplitz_apply, SampleMatrix, SeriesTruncation, ThetaPoly};
use svarma::roots::{
    conjugate_closed_subsets, invert_roots, is_invertible, roots_of, schur_cohn, vieta, IRSelection,
};

fn dense_toeplitz(series: &[f64], t: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t, t, |r, c| if r >= c { series.get(r - c).copied().unwrap_or(0.0) } else { 0.0 })
}

fn padded(coeffs: &[f64], t: usize) -> SeriesTruncation {
    let mut v = coeffs.to_vec();
    v.resize(t, 0.0);
    v.truncate(t);
    SeriesTruncation::new(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn toeplitz_is_a_convolution_homomorphism(seed in any::<u64>(), t in 1usize..300, qa in 0usize..5, qb in 0usize..5) {
        let mut rng = rng(seed);
        let a = random_theta(&mut rng, qa, 0.95);
        let b = random_theta(&mut rng, qb, 0.95);
        let m = normal_matrix(&mut rng, t, 3);
        let ab = a.mul(&b);
        let lhs = toeplitz_apply(&padded(ab.coeffs(), t), &m).unwrap();
        let rhs = toeplitz_apply(&padded(a.coeffs(), t), &toeplitz_apply(&padded(b.coeffs(), t), &m).unwrap()).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + m.amax()));
    }

    #[test]
    fn inverse_series_reproduces_the_impulse(seed in any::<u64>(), q in 1usize..=6, t in 1usize..=4096) {
        let mut rng = rng(seed);
        let theta = random_theta(&mut rng, q, 0.95);
        let c = invert_series(&theta, t).unwrap();
        let c = c.as_slice();
        let scale = c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..t {
            let conv: f64 = theta.coeffs().iter().enumerate().take(j + 1).map(|(i, th)| th * c[j - i]).sum();
            let target = if j == 0 { 1.0 } else { 0.0 };
            prop_assert!((conv - target).abs() <= 1e-12 * scale, "j = {}: {}", j, conv);
        }
    }

    #[test]
    fn fft_path_equals_direct_product(seed in any::<u64>(), t in 1usize..=2048, q in 0usize..=4) {
        let mut rng = rng(seed);
        let theta = random_theta(&mut rng, q, 0.9);
        let series = invert_series(&theta, t).unwrap();
        let a = normal_matrix(&mut rng, t, 2);
        let fast = toeplitz_apply(&series, &a).unwrap();
        let dense = dense_toeplitz(series.as_slice(), t) * &a;
        prop_assert!((fast - dense).amax() <= 1e-10 * (1.0 + a.amax()));
    }

    #[test]
    fn lagged_blocks_match_direct_construction(seed in any::<u64>(), t in 1usize..200, p in 0usize..4, q in 0usize..4) {
        let mut rng = rng(seed);
        let theta = random_theta(&mut rng, q, 0.9);
        let x = SampleMatrix::new(normal_matrix(&mut rng, t + p, 2), p).unwrap();
        let lags = theta_inverse_lags(&theta, &x).unwrap();
        let inv = dense_theta(&theta, t).try_inverse().unwrap();
        for (i, block) in lags.iter().enumerate() {
            let direct = &inv * x.lagged(i);
            prop_assert!(max_rel(block, &direct) < 1e-10);
        }
    }

    #[test]
    fn kernel_inner_product_matches_dense_solve(seed in any::<u64>(), t in 4usize..64, q in 1usize..=4) {
        let mut rng = rng(seed);
        let theta = random_theta(&mut rng, q, 0.9);
        let handle = build_kernel(build_lambda(&theta, t).unwrap()).unwrap();
        let n = normal_matrix(&mut rng, t, 3);
        let m = normal_matrix(&mut rng, t, 2);
        let l = handle.lambda();
        let dense = (DMatrix::identity(t, t) + l * l.transpose()).lu().solve(&m).unwrap();
        let expected = n.tr_mul(&dense);
        prop_assert!(max_rel(&handle.inner_product(&n, &m).unwrap(), &expected) < 1e-10);
    }

    #[test]
    fn projection_complement_is_positive(seed in any::<u64>(), t in 6usize..64, q in 1usize..=4, cols in 1usize..4) {
        let mut rng = rng(seed);
        let theta = random_theta(&mut rng, q, 0.9);
        let k = dense_k_matrix(&theta, t).unwrap();
        let m = normal_matrix(&mut rng, t, cols);
        let km = &k * &m;
        let inner = m.tr_mul(&km);
        let p = &k - &km * inner.try_inverse().unwrap() * km.transpose();
        let sym = (&p + p.transpose()) * 0.5;
        prop_assert!(sym.symmetric_eigenvalues().min() >= -1e-10);
    }

    #[test]
    fn roots_round_trip(seed in any::<u64>(), q in 1usize..=6) {
        let mut rng = rng(seed);
        let roots = random_roots(&mut rng, q, 0.95, 0.1);
        let theta = vieta(&roots);
        let back = vieta(&roots_of(&theta));
        for (a, b) in back.coeffs().iter().zip(theta.coeffs()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn root_inversion_is_an_involution_and_preserves_autocovariance(seed in any::<u64>(), q in 1usize..=4) {
        let mut rng = rng(seed);
        // Keep inverted roots moderate so the T = 12 kernel stays well conditioned.
        let roots = random_roots_in(&mut rng, q, 0.4, 0.95, 0.05);
        let theta = vieta(&roots);
        let omega = random_omega(&mut rng, 2);
        let subsets = conjugate_closed_subsets(&roots_of(&theta));
        for sel in subsets {
            let (th_ir, om_ir) = invert_roots(&theta, &omega, &sel).unwrap();
            let scale = om_ir[(0, 0)] / omega[(0, 0)];
            // Back again: the inverted roots keep their positions in the
            // ordering only up to sorting, so select by modulus instead.
            let back_roots = roots_of(&th_ir);
            let outside = IRSelection::new(
                (0..back_roots.len())
                    .filter(|&i| {
                        let z = back_roots.roots()[i];
                        sel.indices().iter().any(|&j| (roots_of(&theta).roots()[j].inv() - z).norm() < 1e-6)
                    })
                    .collect(),
            );
            let (th_back, om_back) = invert_roots(&th_ir, &om_ir, &outside).unwrap();
            for (a, b) in th_back.coeffs().iter().zip(theta.coeffs()) {
                prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
            }
            prop_assert!(max_rel(&om_back, &omega) < 1e-8);

            let g = build_sigma(&theta, 8).unwrap();
            let g_ir = build_sigma(&th_ir, 8).unwrap();
            for (a, b) in g_ir.gamma().iter().zip(g.gamma()) {
                prop_assert!((a * scale - b).abs() < 1e-9 * (1.0 + b.abs()));
            }

            let t = 12;
            let ld = build_kernel(build_lambda(&theta, t).unwrap()).unwrap().log_det_kbar();
            let ld_ir = build_kernel(build_lambda(&th_ir, t).unwrap()).unwrap().log_det_kbar();
            prop_assert!((ld_ir - (ld - t as f64 * scale.ln())).abs() < 1e-6 * (1.0 + ld_ir.abs()));
        }
    }

    #[test]
    fn invertibility_agrees_with_schur_cohn(seed in any::<u64>(), q in 1usize..=3) {
        let mut rng = rng(seed);
        let tail: Vec<f64> = (0..q).map(|_| rng.random_range(-3.0..3.0)).collect();
        let theta = ThetaPoly::from_tail(&tail).unwrap();
        let modulus = roots_of(&theta).max_modulus();
        // Skip points numerically on the boundary.
        prop_assume!((modulus - 1.0).abs() > 1e-9);
        prop_assert_eq!(schur_cohn(&theta), Some(is_invertible(&theta, 0.0)));
    }
}

#[test]
fn szego_limit_at_t200() {
    let mut rng = rng(31);
    for _ in 0..20 {
        let q = rng.random_range(1..=4);
        let theta = random_theta(&mut rng, q, 0.8);
        let det = build_sigma(&theta, 200).unwrap().to_dense().determinant();
        assert!((1.0 / det - szego_limit(&theta).unwrap()).abs() <= 1e-6);
    }
}

#[test]
fn second_order_table_entry_is_not_the_limit() {
    // The closed form ((1 + t2)^2 - t1^2)(1 - t2)^2 matches the determinant
    // limit; the shorter (1 - t1^2)(1 - t2) does not.
    let theta = ThetaPoly::from_tail(&[0.3, 0.2]).unwrap();
    let (t1, t2) = (0.3, 0.2);
    let general = ((1.0f64 + t2).powi(2) - t1 * t1) * (1.0 - t2).powi(2);
    let det = build_sigma(&theta, 400).unwrap().to_dense().determinant();
    assert!((1.0 / det - general).abs() < 1e-9);
    assert!((szego_limit(&theta).unwrap() - general).abs() < 1e-12);
    assert!((1.0 / det - (1.0 - t1 * t1) * (1.0 - t2)).abs() > 1e-2);
}
