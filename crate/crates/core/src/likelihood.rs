//! Conditional Gaussian log-likelihood of a VARMA model with scalar MA
//! coefficients,
//!
//! ```text
//! X_t = mu + X_{t-1} Phi_1 + ... + X_{t-p} Phi_p + eps_t + theta_1 eps_{t-1} + ... + theta_q eps_{t-q}
//! ```
//!
//! conditioned on the first `p` rows of the sample (never on presample
//! innovations), together with its closed-form maximisers in
//! `(mu, Phi, Omega)` and the resulting profile likelihood in `theta`.
//!
//! All quadratic forms go through `Theta_T^{-1}` (causal convolution with
//! the inverse series) and the kernel inner product `N' K M`, so nothing of
//! size `T x T` is ever built. Log-likelihoods are in nats.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernel::{build_kernel, build_sigma, presample_product, BandedCholesky, KernelHandle, Lambda};
use crate::polyops::{causal_convolve, invert_series, series_lags, SampleMatrix, ThetaPoly};
use crate::roots::roots_of;

/// Deterministic regressors added to the lagged observations.
///
/// Columns appear in the order: constant, `t, t^2, ..., t^d`, then
/// `period - 1` seasonal dummies. `t` is the 1-based row index in the full
/// sample, so the first effective observation has `t = p + 1`; the dummy
/// `j` is one on rows whose 0-based index is `j` modulo the period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegressorSet {
    pub constant: bool,
    pub trend_degree: usize,
    pub seasonal_period: Option<usize>,
    /// Add a small ridge to a singular regression Gram matrix instead of
    /// failing.
    pub ridge: bool,
}

impl Default for RegressorSet {
    fn default() -> Self {
        Self {
            constant: true,
            trend_degree: 0,
            seasonal_period: None,
            ridge: false,
        }
    }
}

impl RegressorSet {
    /// No deterministic columns at all.
    pub fn none() -> Self {
        Self {
            constant: false,
            ..Self::default()
        }
    }

    /// Deterministic columns other than the constant.
    pub fn n_extra(&self) -> usize {
        self.trend_degree + self.seasonal_period.map_or(0, |s| s.saturating_sub(1))
    }

    /// Number of deterministic columns.
    pub fn n_deterministic(&self) -> usize {
        usize::from(self.constant) + self.n_extra()
    }

    /// Width of the regression design for dimension `k` and AR order `p`.
    pub fn n_columns(&self, k: usize, p: usize) -> usize {
        self.n_deterministic() + k * p
    }

    fn validate(&self) -> Result<()> {
        if self.seasonal_period == Some(0) {
            return Err(Error::Dimension("seasonal period must be positive".into()));
        }
        Ok(())
    }

    /// The `T x n_deterministic` deterministic design for a sample.
    pub fn deterministic_design(&self, xhat: &SampleMatrix) -> DMatrix<f64> {
        let (t, p) = (xhat.t(), xhat.p());
        let mut out = DMatrix::zeros(t, self.n_deterministic());
        for s in 0..t {
            let row = p + s;
            let mut col = 0;
            if self.constant {
                out[(s, col)] = 1.0;
                col += 1;
            }
            for d in 1..=self.trend_degree {
                out[(s, col)] = ((row + 1) as f64).powi(d as i32);
                col += 1;
            }
            if let Some(period) = self.seasonal_period {
                for j in 1..period {
                    out[(s, col)] = if row % period == j { 1.0 } else { 0.0 };
                    col += 1;
                }
            }
        }
        out
    }
}

/// Full parameterisation `(theta, mu, Phi_1..Phi_p, Omega)` plus the
/// coefficients of any non-constant deterministic regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct VarmaSpec {
    theta: ThetaPoly,
    mu: DVector<f64>,
    phi: Vec<DMatrix<f64>>,
    omega: DMatrix<f64>,
    exog: DMatrix<f64>,
}

impl VarmaSpec {
    pub fn new(theta: ThetaPoly, mu: DVector<f64>, phi: Vec<DMatrix<f64>>, omega: DMatrix<f64>) -> Result<Self> {
        let k = omega.nrows();
        if k == 0 || omega.ncols() != k {
            return Err(Error::Dimension("Omega must be square and non-empty".into()));
        }
        if mu.len() != k {
            return Err(Error::Dimension(format!("mu has length {}, expected {k}", mu.len())));
        }
        if let Some(i) = phi.iter().position(|m| m.shape() != (k, k)) {
            return Err(Error::Dimension(format!("Phi_{} is not {k} x {k}", i + 1)));
        }
        check_covariance(&omega)?;
        Ok(Self {
            theta,
            mu,
            phi,
            omega,
            exog: DMatrix::zeros(0, k),
        })
    }

    /// Like [`VarmaSpec::new`] but accepts a singular (positive
    /// semi-definite) `Omega`, e.g. for noise-free simulation. Likelihood
    /// evaluation still requires a positive definite `Omega`.
    pub fn new_semidefinite(
        theta: ThetaPoly,
        mu: DVector<f64>,
        phi: Vec<DMatrix<f64>>,
        omega: DMatrix<f64>,
    ) -> Result<Self> {
        let k = omega.nrows();
        let bump = DMatrix::identity(k, k) * omega.amax().max(1.0);
        let mut spec = Self::new(theta, mu, phi, &omega + bump)?;
        let scale = omega.amax().max(1.0);
        if omega.clone().symmetric_eigenvalues().min() < -1e-12 * scale {
            return Err(Error::NotPositiveDefinite);
        }
        spec.omega = omega;
        Ok(spec)
    }

    /// Coefficients (one row per column) of the non-constant deterministic
    /// regressors.
    pub fn with_exog(mut self, exog: DMatrix<f64>) -> Result<Self> {
        if exog.ncols() != self.k() {
            return Err(Error::Dimension("exogenous coefficients need k columns".into()));
        }
        self.exog = exog;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.omega.nrows()
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }

    pub fn q(&self) -> usize {
        self.theta.order()
    }

    pub fn theta(&self) -> &ThetaPoly {
        &self.theta
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn phi(&self) -> &[DMatrix<f64>] {
        &self.phi
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn exog(&self) -> &DMatrix<f64> {
        &self.exog
    }

    fn check_against(&self, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<()> {
        regs.validate()?;
        if xhat.k() != self.k() {
            return Err(Error::Dimension(format!("sample has {} columns, model has k = {}", xhat.k(), self.k())));
        }
        if xhat.p() != self.p() {
            return Err(Error::Dimension(format!(
                "sample has {} conditioning rows, model has p = {}",
                xhat.p(),
                self.p()
            )));
        }
        if self.exog.nrows() != regs.n_extra() {
            return Err(Error::Dimension(format!(
                "model carries {} deterministic coefficients, regressors define {}",
                self.exog.nrows(),
                regs.n_extra()
            )));
        }
        Ok(())
    }
}

fn check_covariance(omega: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let scale = omega.amax().max(1.0);
    if (omega - omega.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite);
    }
    Cholesky::new(omega.clone()).ok_or(Error::NotPositiveDefinite)
}

/// Fitted `(mu, Phi, Omega)` at a given `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedParameters {
    /// Stacked regression coefficients, deterministic rows first then
    /// `Phi_1, ..., Phi_p`.
    pub coefficients: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub exog: DMatrix<f64>,
    pub phi: Vec<DMatrix<f64>>,
    pub omega: DMatrix<f64>,
}

/// A log-likelihood value with its additive decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodReport {
    pub loglik: f64,
    /// `-Tk/2 log 2 pi`
    pub term_const: f64,
    /// `-T/2 log det Omega`
    pub term_omega: f64,
    /// `-k/2 log det(lambda' lambda + I_q)`
    pub term_kbar: f64,
    /// `-1/2 tr(Z' Sigma_T^{-1} Z Omega^{-1})`
    pub term_trace: f64,
    pub fitted: Option<FittedParameters>,
    /// A ridge was added to the regression Gram matrix.
    pub ridge_applied: bool,
}

impl LikelihoodReport {
    fn from_terms(term_const: f64, term_omega: f64, term_kbar: f64, term_trace: f64) -> Self {
        Self {
            loglik: term_const + term_omega + term_kbar + term_trace,
            term_const,
            term_omega,
            term_kbar,
            term_trace,
            fitted: None,
            ridge_applied: false,
        }
    }
}

/// `Z = X - mu - L X Phi_1 - ... - L^p X Phi_p` (minus any extra
/// deterministic terms), rows `p+1 ..= T+p`.
pub fn residuals(spec: &VarmaSpec, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<DMatrix<f64>> {
    spec.check_against(xhat, regs)?;
    let t = xhat.t();
    let mut z = xhat.observations();
    for r in 0..t {
        for c in 0..spec.k() {
            z[(r, c)] -= spec.mu[c];
        }
    }
    if spec.exog.nrows() > 0 {
        let design = regs.deterministic_design(xhat);
        let extra = design.columns(usize::from(regs.constant), regs.n_extra());
        z -= extra * &spec.exog;
    }
    for (i, phi) in spec.phi.iter().enumerate() {
        z -= xhat.lagged(i + 1) * phi;
    }
    Ok(z)
}

/// `T(series) [D | L X | ... | L^p X | X]` for a sample, through one
/// convolution of the whole sample plus the conditioning-row correction.
pub(crate) fn series_regressors(series: &[f64], xhat: &SampleMatrix, regs: &RegressorSet) -> DMatrix<f64> {
    let (t, p, k) = (xhat.t(), xhat.p(), xhat.k());
    let lags = series_lags(series, xhat);
    let det = causal_convolve(series, &regs.deterministic_design(xhat));
    let n_det = det.ncols();
    let mut y = DMatrix::zeros(t, n_det + k * (p + 1));
    y.columns_mut(0, n_det).copy_from(&det);
    for (i, lag) in lags.iter().enumerate().skip(1) {
        y.columns_mut(n_det + (i - 1) * k, k).copy_from(lag);
    }
    y.columns_mut(n_det + p * k, k).copy_from(&lags[0]);
    y
}

/// Everything about a sample that lives in `Theta_T^{-1}` space for one
/// `theta`.
pub(crate) struct Transformed {
    pub t: usize,
    pub k: usize,
    /// Inverse series of `theta`, `T + p` terms.
    pub series: Vec<f64>,
    pub handle: KernelHandle,
    /// `Theta_T^{-1} [D | L X | ... | L^p X | X]`: regression design
    /// followed by the target `X_theta`.
    pub stacked: DMatrix<f64>,
    /// Number of design columns.
    pub n: usize,
}

impl Transformed {
    pub fn new(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<Self> {
        regs.validate()?;
        let (t, p, k) = (xhat.t(), xhat.p(), xhat.k());
        if t < theta.order() {
            return Err(Error::InsufficientSample(format!("T = {t} is smaller than q = {}", theta.order())));
        }
        let series = invert_series(theta, t + p)?.into_vec();
        let handle = build_kernel(Lambda::from_matrix(presample_product(&series, theta, t)))?;
        let stacked = series_regressors(&series, xhat, regs);
        if stacked.iter().any(|v| !v.is_finite()) {
            return Err(Error::KernelFactorization);
        }
        Ok(Self {
            t,
            k,
            series,
            handle,
            n: stacked.ncols() - k,
            stacked,
        })
    }

    pub fn target(&self) -> DMatrix<f64> {
        self.stacked.columns(self.n, self.k).into_owned()
    }
}

/// Roots further than this outside the unit circle send evaluation down the
/// banded path: `Theta_T^{-1}` then grows geometrically and the kernel
/// products lose every digit to cancellation.
const OUTSIDE_TOL: f64 = 1e-8;

pub(crate) fn needs_banded(theta: &ThetaPoly) -> bool {
    theta.order() > 0 && roots_of(theta).max_modulus() > 1.0 + OUTSIDE_TOL
}

/// Weighted normal equations `[D | L X | ... | L^p X | X]' Sigma_T^{-1} [...]`
/// and `log det Sigma_T`, however they were obtained.
pub(crate) struct Weighted {
    pub t: usize,
    pub k: usize,
    /// Number of design columns.
    pub n: usize,
    pub gram: DMatrix<f64>,
    pub log_det_kbar: f64,
}

impl Weighted {
    pub fn new(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<Self> {
        if needs_banded(theta) {
            Self::banded(theta, xhat, regs).map(|(w, _, _)| w)
        } else {
            Self::from_transformed(&Transformed::new(theta, xhat, regs)?)
        }
    }

    pub fn from_transformed(tr: &Transformed) -> Result<Self> {
        Ok(Self {
            t: tr.t,
            k: tr.k,
            n: tr.n,
            gram: tr.handle.inner_product(&tr.stacked, &tr.stacked)?,
            log_det_kbar: tr.handle.log_det_kbar(),
        })
    }

    /// Normal equations through the banded factor of `Sigma_T`; also
    /// returns the factor and the untransformed regressors.
    pub fn banded(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<(Self, BandedCholesky, DMatrix<f64>)> {
        regs.validate()?;
        let (t, k) = (xhat.t(), xhat.k());
        if t < theta.order() {
            return Err(Error::InsufficientSample(format!("T = {t} is smaller than q = {}", theta.order())));
        }
        let band = BandedCholesky::new(&build_sigma(theta, t)?)?;
        let mut identity = vec![0.0; t + xhat.p()];
        identity[0] = 1.0;
        let raw = series_regressors(&identity, xhat, regs);
        let w = band.whiten(&raw);
        let weighted = Self {
            t,
            k,
            n: raw.ncols() - k,
            gram: w.tr_mul(&w),
            log_det_kbar: band.log_det(),
        };
        Ok((weighted, band, raw))
    }
}

/// Generalised least squares in the kernel inner product.
pub(crate) struct Regression {
    pub beta: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub ridge_applied: bool,
}

impl Regression {
    pub fn new(w: &Weighted, ridge: bool) -> Result<Self> {
        let (n, k) = (w.n, w.k);
        if w.t <= n {
            return Err(Error::InsufficientSample(format!(
                "T = {} must exceed the {n} regression columns",
                w.t
            )));
        }
        let gram = &w.gram;
        let b = gram.view((0, n), (n, k)).into_owned();
        let d = gram.view((n, n), (k, k)).into_owned();
        let (beta, ridge_applied) = if n == 0 {
            (DMatrix::zeros(0, k), false)
        } else {
            let g = gram.view((0, 0), (n, n)).into_owned();
            let (chol, ridged) = factor_gram(&g, ridge)?;
            (chol.solve(&b), ridged)
        };
        let mut omega = (d - b.tr_mul(&beta)) / w.t as f64;
        omega = (&omega + omega.transpose()) * 0.5;
        Ok(Self {
            beta,
            omega,
            ridge_applied,
        })
    }
}

fn factor_gram(g: &DMatrix<f64>, ridge: bool) -> Result<(Cholesky<f64, Dyn>, bool)> {
    let max_diag = g.diagonal().amax();
    let well_posed = |c: &Cholesky<f64, Dyn>| {
        c.l_dirty().diagonal().iter().all(|d| d * d > 1e-13 * max_diag)
    };
    if let Some(c) = Cholesky::new(g.clone()) {
        if well_posed(&c) {
            return Ok((c, false));
        }
    }
    if ridge {
        let n = g.nrows();
        let eps = 1e-8 * g.trace() / n as f64;
        let ridged = g + DMatrix::identity(n, n) * eps;
        if let Some(c) = Cholesky::new(ridged) {
            return Ok((c, true));
        }
    }
    let smallest = g.singular_values().min();
    Err(Error::RankDeficient(smallest))
}

fn unstack(coefficients: &DMatrix<f64>, regs: &RegressorSet, k: usize, p: usize, omega: DMatrix<f64>) -> FittedParameters {
    let mut row = 0;
    let mu = if regs.constant {
        row = 1;
        coefficients.row(0).transpose()
    } else {
        DVector::zeros(k)
    };
    let n_extra = regs.n_extra();
    let exog = coefficients.rows(row, n_extra).into_owned();
    row += n_extra;
    let phi = (0..p).map(|i| coefficients.rows(row + i * k, k).into_owned()).collect();
    FittedParameters {
        coefficients: coefficients.clone(),
        mu,
        exog,
        phi,
        omega,
    }
}

/// Evaluates the conditional log-likelihood at fully specified parameters.
pub fn conditional_loglik(spec: &VarmaSpec, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<LikelihoodReport> {
    spec.check_against(xhat, regs)?;
    let (t, k, p) = (xhat.t(), xhat.k(), xhat.p());
    if t <= k * p + 1 {
        return Err(Error::InsufficientSample(format!("T = {t} must exceed kp + 1 = {}", k * p + 1)));
    }
    let omega_chol = check_covariance(&spec.omega)?;
    let (quad, log_det_kbar) = if needs_banded(&spec.theta) {
        let band = BandedCholesky::new(&build_sigma(&spec.theta, t)?)?;
        let w = band.whiten(&residuals(spec, xhat, regs)?);
        (w.tr_mul(&w), band.log_det())
    } else {
        let tr = Transformed::new(&spec.theta, xhat, regs)?;
        let coefficients = stacked_coefficients(spec, regs);
        let mut w = tr.target();
        if regs.constant {
            w -= tr.stacked.column(0) * spec.mu.transpose();
        }
        let skip = usize::from(regs.constant);
        if coefficients.nrows() > skip {
            let n = coefficients.nrows() - skip;
            w -= tr.stacked.columns(skip, n) * coefficients.rows(skip, n);
        }
        (tr.handle.inner_product(&w, &w)?, tr.handle.log_det_kbar())
    };
    let trace = omega_chol.solve(&quad).trace();
    let log_det_omega = 2.0 * omega_chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let (t, kf) = (t as f64, k as f64);
    Ok(LikelihoodReport::from_terms(
        -0.5 * t * kf * (2.0 * PI).ln(),
        -0.5 * t * log_det_omega,
        -0.5 * kf * log_det_kbar,
        -0.5 * trace,
    ))
}

/// Stacked `(mu'; exog; Phi_1; ...; Phi_p)`, omitting `mu` when the
/// regressor set has no constant.
pub fn stacked_coefficients(spec: &VarmaSpec, regs: &RegressorSet) -> DMatrix<f64> {
    let k = spec.k();
    let n = regs.n_columns(k, spec.p());
    let mut out = DMatrix::zeros(n, k);
    let mut row = 0;
    if regs.constant {
        out.row_mut(0).copy_from(&spec.mu.transpose());
        row = 1;
    }
    out.rows_mut(row, spec.exog.nrows()).copy_from(&spec.exog);
    row += spec.exog.nrows();
    for phi in &spec.phi {
        out.rows_mut(row, k).copy_from(phi);
        row += k;
    }
    out
}

/// GLS-optimal stacked `(mu; Phi_1; ...; Phi_p)` in the kernel inner
/// product. Independent of `Omega`.
pub fn optimal_regression(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<DMatrix<f64>> {
    Ok(Regression::new(&Weighted::new(theta, xhat, regs)?, regs.ridge)?.beta)
}

/// `Omega_opt(theta)`, positive semi-definite for every sample.
pub fn optimal_omega(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<DMatrix<f64>> {
    Ok(Regression::new(&Weighted::new(theta, xhat, regs)?, regs.ridge)?.omega)
}

pub(crate) fn profile_from(w: &Weighted, reg: &Regression, regs: &RegressorSet, p: usize) -> Result<LikelihoodReport> {
    let chol = Cholesky::new(reg.omega.clone()).ok_or(Error::SingularOmega)?;
    let log_det_omega = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !log_det_omega.is_finite() {
        return Err(Error::SingularOmega);
    }
    let (t, kf) = (w.t as f64, w.k as f64);
    let mut report = LikelihoodReport::from_terms(
        -0.5 * t * kf * (2.0 * PI).ln(),
        -0.5 * t * log_det_omega,
        -0.5 * kf * w.log_det_kbar,
        -0.5 * t * kf,
    );
    report.fitted = Some(unstack(&reg.beta, regs, w.k, p, reg.omega.clone()));
    report.ridge_applied = reg.ridge_applied;
    Ok(report)
}

/// Profile log-likelihood `Lbar(theta)` with `(mu, Phi, Omega)` at their
/// optimum; the fitted values are attached to the report.
pub fn profile_loglik(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<LikelihoodReport> {
    let w = Weighted::new(theta, xhat, regs)?;
    let reg = Regression::new(&w, regs.ridge)?;
    profile_from(&w, &reg, regs, xhat.p())
}

/// The model at `theta` with its profiled `(mu, Phi, Omega)`.
pub fn profiled_spec(theta: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet) -> Result<VarmaSpec> {
    let report = profile_loglik(theta, xhat, regs)?;
    let fitted = report.fitted.expect("profile attaches fitted values");
    VarmaSpec::new(theta.clone(), fitted.mu, fitted.phi, fitted.omega)?.with_exog(fitted.exog)
}
