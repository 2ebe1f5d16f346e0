//! Analytic gradient of the profile log-likelihood with respect to the MA
//! coefficients `theta_1..theta_q`.
//!
//! Writing `Y = Theta_T^{-1} [D | L X | ... | L^p X | X]` and
//! `M = Y' K Y`, the profile likelihood depends on `theta` only through
//! `log det Omega_opt` (a Schur complement of `M`) and `log det Kbar`.
//! Differentiating `1/theta` gives `-L^j / theta^2`, so every derivative of
//! `Y` and of `lambda` is a row shift of a second Toeplitz product with the
//! series of `1/theta^2`, computed once per evaluation.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::presample_product;
use crate::likelihood::{
    needs_banded, profile_from, series_regressors, LikelihoodReport, RegressorSet, Regression, Transformed, Weighted,
};
use crate::polyops::{divide_series, poly_mul, shift_rows, SampleMatrix, ThetaPoly};

/// `dLbar/dtheta_j` split into its two sources.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub grad: DVector<f64>,
    /// `-T/2 d log det Omega_opt`
    pub omega_part: DVector<f64>,
    /// `-k/2 d log det Kbar`
    pub kbar_part: DVector<f64>,
    /// Profile log-likelihood at the same point.
    pub loglik: f64,
}

/// Derivatives of the building blocks with respect to one coefficient.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct Derivative {
    pub d_stacked: DMatrix<f64>,
    pub d_lambda: DMatrix<f64>,
    pub d_kbar: DMatrix<f64>,
    /// `d(Y' K Y)`
    pub d_gram: DMatrix<f64>,
}

pub(crate) struct GradientContext<'a> {
    tr: &'a Transformed,
    /// `T(1/theta^2) [D | L X | ... | X]`
    v: DMatrix<f64>,
    /// `T(1/theta^2) Theta_*`
    v_lambda: DMatrix<f64>,
    kinv: DMatrix<f64>,
    /// `Y' lambda`
    u: DMatrix<f64>,
}

impl<'a> GradientContext<'a> {
    pub fn new(tr: &'a Transformed, theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Self {
        let len = tr.series.len();
        let c = theta.coeffs();
        let squared = divide_series(&[1.0], &poly_mul(c, c), len);
        Self {
            v: series_regressors(&squared, xhat, regs),
            v_lambda: presample_product(&squared, theta, tr.t),
            kinv: tr.handle.kbar_inverse(),
            u: tr.stacked.tr_mul(tr.handle.lambda()),
            tr,
        }
    }

    /// Derivative with respect to `theta_j`, `1 <= j <= q`.
    pub fn derivative(&self, j: usize) -> Result<Derivative> {
        let tr = self.tr;
        let (t, q) = (tr.t, tr.handle.q());
        let lambda = tr.handle.lambda();
        let d_stacked = -shift_rows(&self.v, j);

        // d lambda = d(Theta^{-1}) Theta_* + Theta^{-1} d(Theta_*); the
        // second term places the first j columns of Theta^{-1} in the last
        // j columns.
        let mut d_lambda = -shift_rows(&self.v_lambda, j);
        for col in q - j..q {
            let lag = col + j - q;
            for row in lag..t {
                d_lambda[(row, col)] += tr.series[row - lag];
            }
        }
        let half = d_lambda.tr_mul(lambda);
        let d_kbar = &half + half.transpose();

        // d(Y'KY) = H + H' + u Kbar^{-1} dKbar Kbar^{-1} u', with
        // H = dY' K Y - (Y' dlambda) Kbar^{-1} u'.
        let w = tr.stacked.tr_mul(&d_lambda);
        let h = tr.handle.inner_product(&d_stacked, &tr.stacked)? - &w * &self.kinv * self.u.transpose();
        let ku = &self.kinv * self.u.transpose();
        let d_gram = &h + h.transpose() + ku.tr_mul(&(&d_kbar * &ku));
        Ok(Derivative {
            d_stacked,
            d_lambda,
            d_kbar,
            d_gram,
        })
    }
}

/// `dOmega_opt` from a derivative of the weighted normal equations.
fn omega_derivative(dm: &DMatrix<f64>, beta: &DMatrix<f64>, n: usize, k: usize, t: f64) -> DMatrix<f64> {
    let mut d_omega = dm.view((n, n), (k, k)).into_owned();
    if n > 0 {
        let db = dm.view((0, n), (n, k));
        let dg = dm.view((0, 0), (n, n));
        let cross = db.tr_mul(beta);
        d_omega -= &cross + cross.transpose();
        d_omega += beta.tr_mul(&(dg * beta));
    }
    d_omega / t
}

/// Profile log-likelihood and its gradient in one pass.
pub fn value_and_gradient(
    theta: &ThetaPoly,
    xhat: &SampleMatrix,
    regs: &RegressorSet,
) -> Result<(LikelihoodReport, GradientReport)> {
    if needs_banded(theta) {
        return banded_value_and_gradient(theta, xhat, regs);
    }
    let tr = Transformed::new(theta, xhat, regs)?;
    let weighted = Weighted::from_transformed(&tr)?;
    let reg = Regression::new(&weighted, regs.ridge)?;
    let report = profile_from(&weighted, &reg, regs, xhat.p())?;
    let q = theta.order();
    let (t, k, n) = (tr.t as f64, tr.k, tr.n);
    let mut omega_part = DVector::zeros(q);
    let mut kbar_part = DVector::zeros(q);
    if q > 0 {
        let omega_inv = Cholesky::new(reg.omega.clone()).ok_or(Error::SingularOmega)?.inverse();
        let ctx = GradientContext::new(&tr, theta, xhat, regs);
        for j in 1..=q {
            let d = ctx.derivative(j)?;
            let d_omega = omega_derivative(&d.d_gram, &reg.beta, n, k, t);
            omega_part[j - 1] = -0.5 * t * (&omega_inv * d_omega).trace();
            kbar_part[j - 1] = -0.5 * k as f64 * (&ctx.kinv * &d.d_kbar).trace();
        }
    }
    let gradient = GradientReport {
        grad: &omega_part + &kbar_part,
        omega_part,
        kbar_part,
        loglik: report.loglik,
    };
    Ok((report, gradient))
}

/// Same quantities for `theta` with roots outside the unit circle, where
/// the kernel terms cancel catastrophically. Differentiates
/// `Z' Sigma_T^{-1} Z` and `log det Sigma_T` directly; `dSigma_T / dtheta_j`
/// is banded.
fn banded_value_and_gradient(
    theta: &ThetaPoly,
    xhat: &SampleMatrix,
    regs: &RegressorSet,
) -> Result<(LikelihoodReport, GradientReport)> {
    let (weighted, band, raw) = Weighted::banded(theta, xhat, regs)?;
    let reg = Regression::new(&weighted, regs.ridge)?;
    let report = profile_from(&weighted, &reg, regs, xhat.p())?;
    let (t, k, n) = (weighted.t, weighted.k, weighted.n);
    let q = theta.order();
    let c = theta.coeffs();
    let omega_inv = Cholesky::new(reg.omega.clone()).ok_or(Error::SingularOmega)?.inverse();
    let solved = band.unwhiten_transpose(&band.whiten(&raw));
    let inv_band = band.inverse_band();
    let mut omega_part = DVector::zeros(q);
    let mut kbar_part = DVector::zeros(q);
    for j in 1..=q {
        // d gamma_l / d theta_j
        let dg: Vec<f64> = (0..=q)
            .map(|l| {
                let up = if j + l <= q { c[j + l] } else { 0.0 };
                let down = if l <= j { c[j - l] } else { 0.0 };
                up + down
            })
            .collect();
        let mut d_solved = DMatrix::zeros(t, solved.ncols());
        for i in 0..t {
            for r in i.saturating_sub(q)..(i + q + 1).min(t) {
                let v = dg[i.abs_diff(r)];
                if v != 0.0 {
                    let row = solved.row(r) * v;
                    let mut target = d_solved.row_mut(i);
                    target += row;
                }
            }
        }
        let dm = -solved.tr_mul(&d_solved);
        let d_omega = omega_derivative(&dm, &reg.beta, n, k, t as f64);
        omega_part[j - 1] = -0.5 * t as f64 * (&omega_inv * d_omega).trace();
        let trace: f64 = inv_band
            .iter()
            .map(|row| row[0] * dg[0] + 2.0 * (1..=q).map(|l| row[l] * dg[l]).sum::<f64>())
            .sum();
        kbar_part[j - 1] = -0.5 * k as f64 * trace;
    }
    let gradient = GradientReport {
        grad: &omega_part + &kbar_part,
        omega_part,
        kbar_part,
        loglik: report.loglik,
    };
    Ok((report, gradient))
}

/// `dLbar/dtheta` at `theta`.
pub fn grad_profile_loglik(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<GradientReport> {
    value_and_gradient(theta, xhat, regs).map(|(_, g)| g)
}

/// Gradient in a parameter vector `params` that determines `theta`, given
/// the `q x m` Jacobian `dtheta_i / dparams_j`.
pub fn grad_chain<F>(
    params: &[f64],
    theta_of: F,
    jac: &DMatrix<f64>,
    xhat: &SampleMatrix,
    regs: &RegressorSet,
) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<ThetaPoly>,
{
    let theta = theta_of(params)?;
    if jac.shape() != (theta.order(), params.len()) {
        return Err(Error::Dimension(format!(
            "Jacobian is {:?}, expected ({}, {})",
            jac.shape(),
            theta.order(),
            params.len()
        )));
    }
    let g = grad_profile_loglik(&theta, xhat, regs)?;
    Ok(jac.tr_mul(&g.grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_lambda;
    use crate::likelihood::profile_loglik;

    fn sample(t: usize, k: usize, p: usize, seed: u64) -> SampleMatrix {
        let mut s = seed;
        let vals: Vec<f64> = (0..(t + p) * k)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        // Add some serial dependence so the optimum is not at theta = 0.
        let mut m = DMatrix::from_row_slice(t + p, k, &vals);
        for r in 1..t + p {
            for c in 0..k {
                m[(r, c)] += 0.4 * vals[(r - 1) * k + c];
            }
        }
        SampleMatrix::new(m, p).unwrap()
    }

    fn finite_difference(theta: &ThetaPoly, x: &SampleMatrix, regs: &RegressorSet) -> Vec<f64> {
        let h = 1e-5;
        (0..theta.order())
            .map(|i| {
                let mut up = theta.tail().to_vec();
                let mut down = up.clone();
                up[i] += h;
                down[i] -= h;
                let f = |v: &[f64]| profile_loglik(&ThetaPoly::from_tail(v).unwrap(), x, regs).unwrap().loglik;
                (f(&up) - f(&down)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close_to_fd(tail: &[f64], x: &SampleMatrix, regs: &RegressorSet) {
        let theta = ThetaPoly::from_tail(tail).unwrap();
        let g = grad_profile_loglik(&theta, x, regs).unwrap();
        let fd = finite_difference(&theta, x, regs);
        for (a, b) in g.grad.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0), "analytic {a} vs fd {b} at {tail:?}");
        }
        assert_eq!(g.grad, &g.omega_part + &g.kbar_part);
    }

    #[test]
    fn matches_finite_differences() {
        assert_close_to_fd(&[0.3], &sample(60, 1, 0, 1), &RegressorSet::default());
        assert_close_to_fd(&[0.3, -0.2], &sample(80, 2, 1, 2), &RegressorSet::default());
        assert_close_to_fd(&[0.5, 0.1, -0.3], &sample(100, 2, 2, 3), &RegressorSet::default());
        let regs = RegressorSet {
            trend_degree: 1,
            seasonal_period: Some(4),
            ..RegressorSet::default()
        };
        assert_close_to_fd(&[-0.4, 0.2, 0.1, 0.05], &sample(150, 1, 1, 4), &regs);
        assert_close_to_fd(&[0.2], &sample(70, 3, 0, 5), &RegressorSet::none());
    }

    #[test]
    fn lambda_derivative_matches_finite_differences() {
        let tail = [0.4, -0.3, 0.2];
        let theta = ThetaPoly::from_tail(&tail).unwrap();
        let x = sample(20, 1, 1, 9);
        let regs = RegressorSet::default();
        let tr = Transformed::new(&theta, &x, &regs).unwrap();
        let ctx = GradientContext::new(&tr, &theta, &x, &regs);
        let h = 1e-6;
        for j in 1..=3 {
            let mut up = tail.to_vec();
            let mut down = tail.to_vec();
            up[j - 1] += h;
            down[j - 1] -= h;
            let l = |v: &[f64]| build_lambda(&ThetaPoly::from_tail(v).unwrap(), 20).unwrap().into_matrix();
            let fd = (l(&up) - l(&down)) / (2.0 * h);
            let d = ctx.derivative(j).unwrap();
            assert!((d.d_lambda - fd).amax() < 1e-7, "column placement for j = {j}");
        }
    }

    #[test]
    fn symmetric_gram_derivative_matches_unsymmetrised_form() {
        let theta = ThetaPoly::from_tail(&[0.3, 0.25]).unwrap();
        let x = sample(30, 2, 1, 12);
        let regs = RegressorSet::default();
        let tr = Transformed::new(&theta, &x, &regs).unwrap();
        let ctx = GradientContext::new(&tr, &theta, &x, &regs);
        let lambda = tr.handle.lambda();
        let kinv = tr.handle.kbar_inverse();
        let t = tr.t;
        let k = DMatrix::identity(t, t) - lambda * &kinv * lambda.transpose();
        for j in 1..=2 {
            let d = ctx.derivative(j).unwrap();
            let dl = &d.d_lambda;
            let dk = -(dl * &kinv * lambda.transpose()) - lambda * &kinv * dl.transpose()
                + lambda * &kinv * &d.d_kbar * &kinv * lambda.transpose();
            let y = &tr.stacked;
            let dy = &d.d_stacked;
            let full = dy.transpose() * &k * y + y.transpose() * &k * dy + y.transpose() * dk * y;
            assert!((&d.d_gram - full).amax() < 1e-9);
        }
    }

    #[test]
    fn unit_roots_are_critical_points() {
        for th in [1.0, -1.0] {
            for seed in 0..3 {
                let x = sample(40, 2, 1, 30 + seed);
                let g = grad_profile_loglik(&ThetaPoly::from_tail(&[th]).unwrap(), &x, &RegressorSet::default()).unwrap();
                assert!(g.grad.amax() < 1e-6, "theta = {th}: {}", g.grad);
            }
        }
    }

    #[test]
    fn chain_rule() {
        let x = sample(60, 1, 0, 7);
        let regs = RegressorSet::default();
        let base = grad_profile_loglik(&ThetaPoly::from_tail(&[0.3]).unwrap(), &x, &regs).unwrap();
        let scaled = grad_chain(
            &[0.15],
            |s| ThetaPoly::from_tail(&[2.0 * s[0]]),
            &DMatrix::from_element(1, 1, 2.0),
            &x,
            &regs,
        )
        .unwrap();
        assert!((scaled[0] - 2.0 * base.grad[0]).abs() < 1e-12);

        let seasonal = |s: &[f64]| ThetaPoly::from_tail(&[0.0, 0.0, 0.0, s[0]]);
        let jac = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
        let gs = grad_chain(&[0.2], seasonal, &jac, &x, &regs).unwrap();
        let h = 1e-5;
        let f = |s: f64| profile_loglik(&seasonal(&[s]).unwrap(), &x, &regs).unwrap().loglik;
        let fd = (f(0.2 + h) - f(0.2 - h)) / (2.0 * h);
        assert!((gs[0] - fd).abs() < 1e-4 * fd.abs().max(1.0));

        assert!(grad_chain(&[0.1], |s| ThetaPoly::from_tail(s), &DMatrix::zeros(2, 1), &x, &regs).is_err());
    }

    #[test]
    fn no_ma_part_has_empty_gradient() {
        let g = grad_profile_loglik(&ThetaPoly::identity(), &sample(20, 1, 1, 1), &RegressorSet::default()).unwrap();
        assert_eq!(g.grad.len(), 0);
    }
}
