//! Dense brute-force references for tests. Everything here materialises
//! `T x T` (or `Tk x Tk`) matrices and is only compiled with the `oracle`
//! feature.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{build_kernel, build_lambda, build_sigma};
use crate::likelihood::{residuals, RegressorSet, VarmaSpec};
use crate::polyops::{SampleMatrix, ThetaPoly};
use crate::roots::roots_of;

pub const MAX_DENSE_GAUSSIAN: usize = 4096;
pub const MAX_DENSE_KERNEL: usize = 512;

fn log_det_chol(c: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Dense `Sigma_T` and its log-determinant, cross-checked against the
/// kernel path.
fn checked_sigma(theta: &ThetaPoly, t: usize) -> Result<(DMatrix<f64>, Cholesky<f64, nalgebra::Dyn>)> {
    let sigma = build_sigma(theta, t)?.to_dense();
    let chol = Cholesky::new(sigma.clone()).ok_or(Error::NotPositiveDefinite)?;
    // The kernel is only a trustworthy witness for invertible theta.
    if theta.order() > 0 && t >= theta.order() && roots_of(theta).max_modulus() <= 1.0 {
        let fast = build_kernel(build_lambda(theta, t)?)?.log_det_kbar();
        let dense = log_det_chol(&chol);
        if (fast - dense).abs() > 1e-8 * (1.0 + dense.abs()) {
            return Err(Error::Guardrail(format!("log det Sigma_T {dense} disagrees with log det Kbar {fast}")));
        }
    }
    Ok((sigma, chol))
}

/// Log-density of `v(Z)` (rows stacked) under `N(0, Sigma_T (x) Omega)`.
pub fn dense_loglik(spec: &VarmaSpec, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<f64> {
    let (t, k) = (xhat.t(), xhat.k());
    if t * k > MAX_DENSE_GAUSSIAN {
        return Err(Error::Guardrail(format!("T k = {} exceeds {MAX_DENSE_GAUSSIAN}", t * k)));
    }
    let z = residuals(spec, xhat, regs)?;
    let (sigma, _) = checked_sigma(spec.theta(), t)?;
    let cov = sigma.kronecker(spec.omega());
    let chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)?;
    let v = DVector::from_iterator(t * k, (0..t).flat_map(|r| (0..k).map(move |c| (r, c))).map(|(r, c)| z[(r, c)]));
    let solved = chol.solve(&v);
    let n = (t * k) as f64;
    Ok(-0.5 * n * (2.0 * PI).ln() - 0.5 * log_det_chol(&chol) - 0.5 * v.dot(&solved))
}

/// Explicit `K = I_T - lambda Kbar^{-1} lambda'`.
pub fn dense_k_matrix(theta: &ThetaPoly, t: usize) -> Result<DMatrix<f64>> {
    if t > MAX_DENSE_KERNEL {
        return Err(Error::Guardrail(format!("T = {t} exceeds {MAX_DENSE_KERNEL}")));
    }
    if theta.order() == 0 {
        return Ok(DMatrix::identity(t, t));
    }
    let handle = build_kernel(build_lambda(theta, t)?)?;
    let l = handle.lambda();
    Ok(DMatrix::identity(t, t) - l * handle.kbar_inverse() * l.transpose())
}

/// Dense lower-triangular Toeplitz `Theta_T`.
pub fn dense_theta(theta: &ThetaPoly, t: usize) -> DMatrix<f64> {
    let c = theta.coeffs();
    DMatrix::from_fn(t, t, |r, col| if r >= col { c.get(r - col).copied().unwrap_or(0.0) } else { 0.0 })
}

/// Untransformed regression design `[D | L X | ... | L^p X]`.
pub fn dense_design(xhat: &SampleMatrix, regs: &RegressorSet) -> DMatrix<f64> {
    let det = regs.deterministic_design(xhat);
    let (t, k, p) = (xhat.t(), xhat.k(), xhat.p());
    let mut out = DMatrix::zeros(t, det.ncols() + k * p);
    out.columns_mut(0, det.ncols()).copy_from(&det);
    for i in 1..=p {
        out.columns_mut(det.ncols() + (i - 1) * k, k).copy_from(&xhat.lagged(i));
    }
    out
}

/// `Sigma_T^{-1}`-weighted least squares of `X` on the design.
pub fn dense_gls(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<DMatrix<f64>> {
    let t = xhat.t();
    if t > MAX_DENSE_KERNEL {
        return Err(Error::Guardrail(format!("T = {t} exceeds {MAX_DENSE_KERNEL}")));
    }
    let (_, chol) = checked_sigma(theta, t)?;
    let d = dense_design(xhat, regs);
    let x = xhat.observations();
    let wd = chol.solve(&d);
    let g = d.tr_mul(&wd);
    let b = wd.tr_mul(&x);
    Cholesky::new(g).map(|c| c.solve(&b)).ok_or(Error::RankDeficient(0.0))
}

/// `(Omega_opt, Lbar)` from the dense GLS fit.
pub fn dense_profile(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<(DMatrix<f64>, f64)> {
    let (t, k) = (xhat.t(), xhat.k());
    let beta = dense_gls(theta, xhat, regs)?;
    let (_, chol) = checked_sigma(theta, t)?;
    let resid = xhat.observations() - dense_design(xhat, regs) * beta;
    let omega = resid.tr_mul(&chol.solve(&resid)) / t as f64;
    let omega_chol = Cholesky::new(omega.clone()).ok_or(Error::SingularOmega)?;
    let (tf, kf) = (t as f64, k as f64);
    let loglik = -0.5 * tf * kf * (2.0 * PI).ln() - 0.5 * tf * log_det_chol(&omega_chol) - 0.5 * kf * log_det_chol(&chol)
        - 0.5 * tf * kf;
    Ok((omega, loglik))
}
