#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use svarma::roots::{vieta, RootSet};
use svarma::simulate::{simulate_varma, NoiseConfig};
use svarma::{SampleMatrix, ThetaPoly, VarmaSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `q` inverse roots with modulus in `[0.05, max_modulus]`, conjugate
/// closed and pairwise at least `min_gap` apart.
pub fn random_roots(rng: &mut ChaCha8Rng, q: usize, max_modulus: f64, min_gap: f64) -> RootSet {
    random_roots_in(rng, q, 0.05, max_modulus, min_gap)
}

/// Like [`random_roots`] with an explicit lower modulus bound.
pub fn random_roots_in(rng: &mut ChaCha8Rng, q: usize, min_modulus: f64, max_modulus: f64, min_gap: f64) -> RootSet {
    'retry: loop {
        let mut roots: Vec<Complex64> = Vec::with_capacity(q);
        while roots.len() < q {
            let r = rng.random_range(min_modulus..max_modulus);
            if q - roots.len() >= 2 && rng.random_bool(0.5) {
                let angle = rng.random_range(0.2..std::f64::consts::PI - 0.2);
                let z = Complex64::from_polar(r, angle);
                roots.push(z);
                roots.push(z.conj());
            } else {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                roots.push(Complex64::new(sign * r, 0.0));
            }
        }
        for i in 0..q {
            for j in i + 1..q {
                if (roots[i] - roots[j]).norm() < min_gap {
                    continue 'retry;
                }
            }
        }
        return RootSet::new(roots).expect("conjugate closed by construction");
    }
}

pub fn random_theta(rng: &mut ChaCha8Rng, q: usize, max_modulus: f64) -> ThetaPoly {
    vieta(&random_roots(rng, q, max_modulus, 0.0))
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A stable AR coefficient list with spectral radius well inside the
/// unit circle.
pub fn random_phi(rng: &mut ChaCha8Rng, k: usize, p: usize) -> Vec<DMatrix<f64>> {
    loop {
        let phi: Vec<DMatrix<f64>> = (0..p).map(|_| normal_matrix(rng, k, k) * (0.4 / (k * p) as f64)).collect();
        if svarma::simulate::ar_spectral_radius(&phi) < 0.8 {
            return phi;
        }
    }
}

pub fn random_omega(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let a = normal_matrix(rng, k, k);
    &a * a.transpose() * 0.5 + DMatrix::identity(k, k) * 0.5
}

pub fn random_spec(rng: &mut ChaCha8Rng, k: usize, p: usize, q: usize, max_modulus: f64) -> VarmaSpec {
    let theta = random_theta(rng, q, max_modulus);
    let mu = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
    VarmaSpec::new(theta, mu, random_phi(rng, k, p), random_omega(rng, k)).unwrap()
}

/// Sample drawn from a random VARMA(p, q).
pub fn random_sample(rng: &mut ChaCha8Rng, t: usize, k: usize, p: usize, q: usize) -> SampleMatrix {
    let spec = random_spec(rng, k, p, q, 0.8);
    simulate_varma(&spec, t, &NoiseConfig::new(rng.random())).unwrap()
}

pub fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}
