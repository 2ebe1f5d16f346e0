//! The Woodbury kernel of a scalar MA polynomial.
//!
//! For `theta` and sample length `T`, `lambda = Theta_T^{-1} Theta_{*;T-q}`
//! is `T x q`, `Kbar = I_q + lambda' lambda` is `q x q`, and the implicit
//! `T x T` kernel is `K = I_T - lambda Kbar^{-1} lambda' = (I_T + lambda lambda')^{-1}`.
//! The banded MA autocovariance satisfies
//! `Sigma_T^{-1} = Theta_T^{-T} K Theta_T^{-1}` and `det Sigma_T = det Kbar`,
//! so every quadratic form in `Sigma_T^{-1}` reduces to triangular Toeplitz
//! products plus a `q x q` Cholesky factor. `K` itself is never formed.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::polyops::{invert_series, ThetaPoly};
use crate::roots::roots_of;

/// `lambda = Theta_T^{-1} Theta_{*;T-q}`, a `T x q` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda(DMatrix<f64>);

impl Lambda {
    /// Wraps an arbitrary `T x q` matrix.
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// `T(series, T) Theta_{*;T-q}`. Column `j` of `Theta_*` holds
/// `theta_{q-j}, ..., theta_q` in rows `0..=j`.
pub(crate) fn presample_product(series: &[f64], theta: &ThetaPoly, t: usize) -> DMatrix<f64> {
    let q = theta.order();
    let c = theta.coeffs();
    let mut out = DMatrix::zeros(t, q);
    for j in 0..q {
        let mut col = out.column_mut(j);
        for row in 0..t {
            let mut acc = 0.0;
            for r in 0..=j.min(row) {
                acc += series[row - r] * c[q - j + r];
            }
            col[row] = acc;
        }
    }
    out
}

/// Builds `lambda` column by column from the inverse series of `theta`.
pub fn build_lambda(theta: &ThetaPoly, t: usize) -> Result<Lambda> {
    let q = theta.order();
    if t < q.max(1) {
        return Err(Error::InsufficientSample(format!("T = {t} is smaller than q = {q}")));
    }
    let series = invert_series(theta, t)?;
    Ok(Lambda(presample_product(series.as_slice(), theta, t)))
}

/// Precomputed `lambda`, `Kbar` and its Cholesky factor `C` (`C C' = Kbar`).
#[derive(Debug, Clone)]
pub struct KernelHandle {
    lambda: DMatrix<f64>,
    kbar: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// `Kbar = I_q + lambda' lambda` with its Cholesky factor. Fails only when
/// `lambda` carries non-finite values.
pub fn build_kernel(lambda: Lambda) -> Result<KernelHandle> {
    let lambda = lambda.0;
    let q = lambda.ncols();
    let kbar = DMatrix::identity(q, q) + lambda.tr_mul(&lambda);
    if kbar.iter().any(|v| !v.is_finite()) {
        return Err(Error::KernelFactorization);
    }
    let chol = Cholesky::new(kbar.clone()).ok_or(Error::KernelFactorization)?;
    Ok(KernelHandle { lambda, kbar, chol })
}

impl KernelHandle {
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn kbar(&self) -> &DMatrix<f64> {
        &self.kbar
    }

    /// Lower-triangular `C` with `C C' = Kbar`.
    pub fn kbar_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn kbar_inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn t(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn q(&self) -> usize {
        self.lambda.ncols()
    }

    /// `C^{-1} lambda' N`.
    fn half(&self, n: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = self.lambda.tr_mul(n);
        self.chol.l_dirty().solve_lower_triangular_mut(&mut h);
        h
    }

    /// `N' K M = N'M - (C^{-1} lambda' N)' (C^{-1} lambda' M)`.
    pub fn inner_product(&self, n: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let t = self.t();
        if n.nrows() != t || m.nrows() != t {
            return Err(Error::Dimension(format!(
                "kernel has {t} rows, operands have {} and {}",
                n.nrows(),
                m.nrows()
            )));
        }
        let mut out = n.tr_mul(m);
        if self.q() > 0 {
            let hn = self.half(n);
            let hm = if std::ptr::eq(n, m) { hn.clone() } else { self.half(m) };
            out -= hn.tr_mul(&hm);
        }
        Ok(out)
    }

    /// `log det Kbar = 2 sum log C_ii`.
    pub fn log_det_kbar(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// `N' K M` through the kernel handle.
#[allow(non_snake_case)]
pub fn inner_product_K(handle: &KernelHandle, n: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    handle.inner_product(n, m)
}

/// `log det(lambda' lambda + I_q)`, equal to `log det Sigma_T`.
pub fn log_det_kbar(handle: &KernelHandle) -> f64 {
    handle.log_det_kbar()
}

/// Banded symmetric Toeplitz MA(q) autocovariance with unit innovation
/// variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaBand {
    gamma: Vec<f64>,
    t: usize,
}

impl SigmaBand {
    /// `(gamma_0, ..., gamma_q)`.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma.get(i.abs_diff(j)).copied().unwrap_or(0.0)
    }

    /// Dense `T x T` copy.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.t, self.t, |i, j| self.get(i, j))
    }
}

/// Banded Cholesky factor `L L' = Sigma_T`, `O(T q^2)`. Unlike the kernel
/// path it stays well conditioned when `theta` has roots outside the unit
/// circle, because `Sigma_T` itself is bounded there.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    /// Row `i` holds `L[i, i - q..=i]`, left-padded with zeros.
    rows: Vec<f64>,
    width: usize,
    t: usize,
}

impl BandedCholesky {
    pub fn new(sigma: &SigmaBand) -> Result<Self> {
        let (t, width) = (sigma.t(), sigma.gamma().len());
        let q = width - 1;
        let mut rows = vec![0.0; t * width];
        // L[i, j] lives at rows[i * width + (j + q - i)].
        let at = |i: usize, j: usize| i * width + j + q - i;
        for i in 0..t {
            for j in i.saturating_sub(q)..=i {
                let mut s = sigma.get(i, j);
                for m in i.saturating_sub(q).max(j.saturating_sub(q))..j {
                    s -= rows[at(i, m)] * rows[at(j, m)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    rows[at(i, i)] = s.sqrt();
                } else {
                    rows[at(i, j)] = s / rows[at(j, j)];
                }
            }
        }
        Ok(Self { rows, width, t })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// `L^{-1} A`.
    pub fn whiten(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.nrows(), self.t, "row count must equal T");
        let q = self.width - 1;
        let mut out = a.clone();
        for c in 0..a.ncols() {
            let mut col = out.column_mut(c);
            for i in 0..self.t {
                let base = i * self.width + q - i;
                let mut s = col[i];
                for m in i.saturating_sub(q)..i {
                    s -= self.rows[base + m] * col[m];
                }
                col[i] = s / self.rows[base + i];
            }
        }
        out
    }

    /// `L^{-T} A`; together with [`Self::whiten`] this solves `Sigma_T X = A`.
    pub fn unwhiten_transpose(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.nrows(), self.t, "row count must equal T");
        let q = self.width - 1;
        let mut out = a.clone();
        for c in 0..a.ncols() {
            let mut col = out.column_mut(c);
            for i in (0..self.t).rev() {
                let mut s = col[i];
                for m in i + 1..(i + q + 1).min(self.t) {
                    s -= self.entry(m, i) * col[m];
                }
                col[i] = s / self.entry(i, i);
            }
        }
        out
    }

    /// Band of `Sigma_T^{-1}`: element `[i][l]` is `(Sigma_T^{-1})_{i, i+l}`
    /// for `l = 0..=q` (zero past the end). Selected-inversion recurrence,
    /// `O(T q^2)`.
    pub fn inverse_band(&self) -> Vec<Vec<f64>> {
        let q = self.width - 1;
        let t = self.t;
        let mut z = vec![vec![0.0; q + 1]; t];
        let get = |z: &Vec<Vec<f64>>, i: usize, j: usize| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            if b - a > q || b >= t {
                0.0
            } else {
                z[a][b - a]
            }
        };
        for i in (0..t).rev() {
            let lii = self.entry(i, i);
            for l in (0..=q).rev() {
                let j = i + l;
                if j >= t {
                    continue;
                }
                let mut s = if l == 0 { 1.0 / lii } else { 0.0 };
                for m in i + 1..(i + q + 1).min(t) {
                    s -= self.entry(m, i) * get(&z, m, j);
                }
                z[i][l] = s / lii;
            }
        }
        z
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        let q = self.width - 1;
        self.rows[i * self.width + j + q - i]
    }

    /// `log det Sigma_T`.
    pub fn log_det(&self) -> f64 {
        let q = self.width - 1;
        2.0 * (0..self.t).map(|i| self.rows[i * self.width + q].ln()).sum::<f64>()
    }
}

/// `gamma_l = sum_{i=0}^{q-l} theta_i theta_{i+l}`.
pub fn build_sigma(theta: &ThetaPoly, t: usize) -> Result<SigmaBand> {
    if t == 0 {
        return Err(Error::InsufficientSample("T must be at least 1".into()));
    }
    let c = theta.coeffs();
    let gamma = (0..c.len())
        .map(|l| c.iter().zip(&c[l..]).map(|(a, b)| a * b).sum())
        .collect();
    Ok(SigmaBand { gamma, t })
}

/// Large-`T` limit of `det(Sigma_T)^{-1}` for invertible `theta`:
/// `theta(1) theta(-1) prod_{i<j} (1 - lambda_i lambda_j)^2`.
pub fn szego_limit(theta: &ThetaPoly) -> Result<f64> {
    let roots = roots_of(theta);
    let max = roots.max_modulus();
    if max >= 1.0 {
        return Err(Error::NotInvertible(max));
    }
    let at_one: f64 = theta.coeffs().iter().sum();
    let at_minus_one: f64 = theta
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| if i % 2 == 0 { *c } else { -c })
        .sum();
    let r = roots.roots();
    let mut cross = num_complex::Complex64::new(1.0, 0.0);
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            let f = 1.0 - r[i] * r[j];
            cross *= f * f;
        }
    }
    Ok(at_one * at_minus_one * cross.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(tail: &[f64]) -> ThetaPoly {
        ThetaPoly::from_tail(tail).unwrap()
    }

    fn dense_theta(th: &ThetaPoly, t: usize) -> DMatrix<f64> {
        let c = th.coeffs();
        DMatrix::from_fn(t, t, |r, col| if r >= col { c.get(r - col).copied().unwrap_or(0.0) } else { 0.0 })
    }

    fn dense_presample(th: &ThetaPoly, t: usize) -> DMatrix<f64> {
        let q = th.order();
        let c = th.coeffs();
        DMatrix::from_fn(t, q, |r, j| if r <= j { c[q - j + r] } else { 0.0 })
    }

    #[test]
    fn lambda_q1() {
        let l = build_lambda(&theta(&[0.5]), 3).unwrap();
        assert_eq!(l.matrix().as_slice(), &[0.5, -0.25, 0.125]);
        let z = build_lambda(&theta(&[0.0]), 3).unwrap();
        assert_eq!(z.matrix().as_slice(), &[0.0, 0.0, 0.0]);
        assert!(build_lambda(&theta(&[0.1, 0.2, 0.3]), 2).is_err());
    }

    #[test]
    fn lambda_matches_triangular_solve() {
        let th = theta(&[0.3, 0.1]);
        let l = build_lambda(&th, 4).unwrap();
        let dense = dense_theta(&th, 4)
            .solve_lower_triangular(&dense_presample(&th, 4))
            .unwrap();
        assert!((l.matrix() - dense).amax() < 1e-12);
    }

    #[test]
    fn kernel_scalar_examples() {
        let zero = build_kernel(Lambda(DMatrix::zeros(3, 1))).unwrap();
        assert_eq!(zero.kbar()[(0, 0)], 1.0);
        assert_eq!(zero.log_det_kbar(), 0.0);
        let n = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        assert_eq!(zero.inner_product(&n, &n).unwrap(), n.tr_mul(&n));

        let h = build_kernel(build_lambda(&theta(&[0.5]), 3).unwrap()).unwrap();
        assert_eq!(h.kbar()[(0, 0)], 1.328125);
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let v = h.inner_product(&e1, &e1).unwrap()[(0, 0)];
        assert!((v - (1.0 - 0.25 / 1.328125)).abs() < 1e-15);
        assert!((h.log_det_kbar() - 1.328125f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn woodbury_on_fixed_lambda() {
        let lambda = DMatrix::from_fn(6, 2, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.3 - 0.6);
        let h = build_kernel(Lambda(lambda.clone())).unwrap();
        let k = DMatrix::identity(6, 6) - &lambda * h.kbar_inverse() * lambda.transpose();
        let prod = (DMatrix::identity(6, 6) + &lambda * lambda.transpose()) * k;
        assert!((prod - DMatrix::identity(6, 6)).amax() < 1e-12);
    }

    #[test]
    fn inner_product_dimension_check() {
        let h = build_kernel(build_lambda(&theta(&[0.5]), 3).unwrap()).unwrap();
        assert!(h.inner_product(&DMatrix::zeros(4, 1), &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn sigma_examples() {
        let s = build_sigma(&theta(&[0.5]), 3).unwrap();
        assert_eq!(s.gamma(), &[1.25, 0.5]);
        let det = s.to_dense().determinant();
        assert!((det - 1.328125).abs() < 1e-12);

        assert_eq!(build_sigma(&ThetaPoly::identity(), 4).unwrap().to_dense(), DMatrix::identity(4, 4));

        let s = build_sigma(&theta(&[0.3, 0.1]), 5).unwrap();
        assert!((s.gamma()[0] - 1.10).abs() < 1e-15);
        assert!((s.gamma()[1] - 0.33).abs() < 1e-15);
        assert!((s.gamma()[2] - 0.1).abs() < 1e-15);
        assert_eq!(s.get(0, 4), 0.0);
        assert!(build_sigma(&theta(&[0.3]), 0).is_err());
    }

    #[test]
    fn sigma_equals_theta_kinv_theta() {
        let th = theta(&[0.4, -0.3, 0.2]);
        let t = 12;
        let h = build_kernel(build_lambda(&th, t).unwrap()).unwrap();
        let l = h.lambda();
        let kinv = DMatrix::identity(t, t) + l * l.transpose();
        let th_t = dense_theta(&th, t);
        let rebuilt = &th_t * kinv * th_t.transpose();
        assert!((rebuilt - build_sigma(&th, t).unwrap().to_dense()).amax() < 1e-12);
    }

    #[test]
    fn log_det_matches_dense_sigma() {
        let th = theta(&[0.3, 0.1]);
        let h = build_kernel(build_lambda(&th, 50).unwrap()).unwrap();
        let dense = build_sigma(&th, 50).unwrap().to_dense().cholesky().unwrap();
        let ld: f64 = 2.0 * dense.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        assert!((h.log_det_kbar() - ld).abs() < 1e-9);
    }

    #[test]
    fn szego_examples() {
        assert!((szego_limit(&theta(&[0.5])).unwrap() - 0.75).abs() < 1e-14);
        assert_eq!(szego_limit(&ThetaPoly::identity()).unwrap(), 1.0);
        let th = theta(&[0.0, 0.0625]);
        let expected = 1.0625 * 1.0625 * 0.9375 * 0.9375;
        assert!((szego_limit(&th).unwrap() - expected).abs() < 1e-14);
        let det = build_sigma(&th, 500).unwrap().to_dense().determinant();
        assert!((1.0 / det - expected).abs() < 1e-9);
        assert!(matches!(szego_limit(&theta(&[1.5])), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn banded_factor_matches_dense() {
        for tail in [&[0.5][..], &[2.5, -0.7], &[0.3, 0.2, -1.8], &[]] {
            let th = theta(tail);
            let sigma = build_sigma(&th, 30).unwrap();
            let band = BandedCholesky::new(&sigma).unwrap();
            let dense = sigma.to_dense();
            let chol = dense.clone().cholesky().unwrap();
            let a = DMatrix::from_fn(30, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
            let w = band.whiten(&a);
            let expected = chol.l().solve_lower_triangular(&a).unwrap();
            assert!((w - expected).amax() < 1e-10);
            assert!((band.log_det() - dense.determinant().ln()).abs() < 1e-10);
            let inv = dense.clone().try_inverse().unwrap();
            let solved = band.unwhiten_transpose(&band.whiten(&a));
            assert!((solved - &inv * &a).amax() < 1e-9);
            for (i, row) in band.inverse_band().iter().enumerate() {
                for (l, v) in row.iter().enumerate() {
                    if i + l < 30 {
                        assert!((v - inv[(i, i + l)]).abs() < 1e-10);
                    }
                }
            }
        }
    }
}
