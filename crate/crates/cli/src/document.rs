//! JSON model documents. Floats are written with 17 significant digits so
//! that write -> read -> write is byte-identical.

use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use svarma::{FitResult, RegressorSet, ScalarForm, ThetaPoly, VarmaSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const SCALAR_KIND: &str = "scalar-ma-varma";
pub const MATRIX_KIND: &str = "matrix-ma-varma";

/// A float in canonical form: `d.dddddddddddddddde±x`, or `null` when not
/// finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{:.16e}", self.0)
        } else {
            f.write_str("null")
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(self.to_string()).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Option::<f64>::deserialize(d).map(|v| Num(v.unwrap_or(f64::NAN)))
    }
}

fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().copied().map(Num).collect()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<Num>> {
    m.row_iter().map(|r| r.iter().copied().map(Num).collect()).collect()
}

fn floats(v: &[Num]) -> Vec<f64> {
    v.iter().map(|n| n.0).collect()
}

fn matrix(rows: &[Vec<Num>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        bail!("{what} must be {nrows} x {ncols}");
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j].0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressors {
    pub constant: bool,
    pub trend_degree: usize,
    pub seasonal_period: Option<usize>,
}

impl From<&RegressorSet> for Regressors {
    fn from(r: &RegressorSet) -> Self {
        Self {
            constant: r.constant,
            trend_degree: r.trend_degree,
            seasonal_period: r.seasonal_period,
        }
    }
}

impl Regressors {
    pub fn to_set(&self) -> RegressorSet {
        RegressorSet {
            constant: self.constant,
            trend_degree: self.trend_degree,
            seasonal_period: self.seasonal_period,
            ridge: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: Vec<Num>,
    pub end: Vec<Num>,
    pub loglik: Num,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    /// Effective sample size (rows after the conditioning rows).
    pub t: usize,
    pub n_params: usize,
    pub seeds_used: usize,
    pub best_start: Option<usize>,
    pub converged: bool,
    pub boundary_flag: bool,
    pub ridge_applied: bool,
    pub starts: Vec<StartSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionReport {
    /// Largest transfer-function deviation over the sampled points.
    pub transfer_deviation: Num,
    pub source_p: usize,
    pub source_q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub p: usize,
    pub q: usize,
    pub loglik: Num,
    pub aic: Num,
    pub bic: Num,
}

/// Result of scanning orders up to a McMillan-degree bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSearch {
    pub bound: usize,
    /// Leading rows dropped so that every candidate shares one sample.
    pub skipped_rows: usize,
    pub candidates: Vec<Candidate>,
}

/// Scalar-MA VARMA model: `theta` holds all coefficients including the
/// leading 1, `phi[i]` is the `k x k` lag-`i+1` matrix in row convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub kind: String,
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub theta: Vec<Num>,
    pub mu: Vec<Num>,
    pub regressors: Regressors,
    /// Trend and seasonal coefficients, one row per regressor.
    pub exog: Vec<Vec<Num>>,
    pub phi: Vec<Vec<Vec<Num>>>,
    pub omega: Vec<Vec<Num>>,
    pub loglik: Option<Num>,
    pub aic: Option<Num>,
    pub bic: Option<Num>,
    pub fit: Option<FitMetadata>,
    pub conversion: Option<ConversionReport>,
    pub order_search: Option<OrderSearch>,
}

impl ModelDocument {
    pub fn from_fit(fit: &FitResult, p: usize, regs: &RegressorSet) -> Self {
        let k = fit.omega.nrows();
        Self {
            schema_version: SCHEMA_VERSION,
            kind: SCALAR_KIND.into(),
            k,
            p,
            q: fit.theta.order(),
            theta: nums(fit.theta.coeffs()),
            mu: nums(fit.mu.as_slice()),
            regressors: regs.into(),
            exog: rows(&fit.exog),
            phi: fit.phi.iter().map(rows).collect(),
            omega: rows(&fit.omega),
            loglik: Some(Num(fit.loglik)),
            aic: Some(Num(fit.aic)),
            bic: Some(Num(fit.bic)),
            fit: Some(FitMetadata {
                t: fit.t,
                n_params: fit.n_params,
                seeds_used: fit.starts.len(),
                best_start: fit.best_start,
                converged: fit.converged,
                boundary_flag: fit.boundary_flag,
                ridge_applied: fit.ridge_applied,
                starts: fit
                    .starts
                    .iter()
                    .map(|s| StartSummary {
                        start: nums(&s.start),
                        end: nums(&s.end),
                        loglik: Num(s.loglik),
                        iterations: s.iterations,
                        converged: s.converged,
                    })
                    .collect(),
            }),
            conversion: None,
            order_search: None,
        }
    }

    pub fn from_scalar_form(form: &ScalarForm, source_p: usize, source_q: usize) -> Self {
        let k = form.omega.nrows();
        Self {
            schema_version: SCHEMA_VERSION,
            kind: SCALAR_KIND.into(),
            k,
            p: form.phi.len(),
            q: form.theta.order(),
            theta: nums(form.theta.coeffs()),
            mu: nums(form.mu.as_slice()),
            regressors: (&RegressorSet::default()).into(),
            exog: Vec::new(),
            phi: form.phi.iter().map(rows).collect(),
            omega: rows(&form.omega),
            loglik: None,
            aic: None,
            bic: None,
            fit: None,
            conversion: Some(ConversionReport {
                transfer_deviation: Num(form.transfer_deviation),
                source_p,
                source_q,
            }),
            order_search: None,
        }
    }

    pub fn theta(&self) -> Result<ThetaPoly> {
        if self.theta.len() != self.q + 1 {
            bail!("theta has {} coefficients, expected q + 1 = {}", self.theta.len(), self.q + 1);
        }
        Ok(ThetaPoly::new(floats(&self.theta))?)
    }

    /// The full parameter set, validated against the declared dimensions.
    pub fn spec(&self) -> Result<VarmaSpec> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema_version {}", self.schema_version);
        }
        if self.kind != SCALAR_KIND {
            bail!("expected a {SCALAR_KIND} document, found {:?}", self.kind);
        }
        let k = self.k;
        if self.mu.len() != k {
            bail!("mu has {} entries, expected k = {k}", self.mu.len());
        }
        if self.phi.len() != self.p {
            bail!("phi has {} lags, expected p = {}", self.phi.len(), self.p);
        }
        let phi = self
            .phi
            .iter()
            .enumerate()
            .map(|(i, m)| matrix(m, k, k, &format!("phi[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let omega = matrix(&self.omega, k, k, "omega")?;
        let mu = DVector::from_vec(floats(&self.mu));
        let spec = VarmaSpec::new_semidefinite(self.theta()?, mu, phi, omega)?;
        let n_extra = self.regressors.to_set().n_extra();
        let exog = matrix(&self.exog, n_extra, k, "exog")?;
        Ok(spec.with_exog(exog)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut out = serde_json::to_string_pretty(self)?;
        out.push('\n');
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Matrix-MA model in row convention:
/// `X_t = mu' + sum X_{t-i} phi[i-1] + eps_t + sum eps_{t-j} theta[j-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixModelDocument {
    pub schema_version: u32,
    pub kind: String,
    pub k: usize,
    pub phi: Vec<Vec<Vec<Num>>>,
    pub theta: Vec<Vec<Vec<Num>>>,
    pub mu: Vec<Num>,
    pub omega: Vec<Vec<Num>>,
}

impl MatrixModelDocument {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn model(&self) -> Result<svarma::MatrixVarma> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema_version {}", self.schema_version);
        }
        if self.kind != MATRIX_KIND {
            bail!("expected a {MATRIX_KIND} document, found {:?}", self.kind);
        }
        let k = self.k;
        let list = |ms: &[Vec<Vec<Num>>], name: &str| {
            ms.iter()
                .enumerate()
                .map(|(i, m)| matrix(m, k, k, &format!("{name}[{i}]")))
                .collect::<Result<Vec<_>>>()
        };
        if self.mu.len() != k {
            bail!("mu has {} entries, expected k = {k}", self.mu.len());
        }
        Ok(svarma::MatrixVarma::from_row_form(
            &list(&self.phi, "phi")?,
            &list(&self.theta, "theta")?,
            DVector::from_vec(floats(&self.mu)),
            matrix(&self.omega, k, k, "omega")?,
        )?)
    }
}
