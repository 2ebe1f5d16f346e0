//! Scalar MA polynomials, truncated power-series division and causal
//! (lower-triangular Toeplitz) convolution of data matrices.
//!
//! Every long matrix product in the likelihood is of the form
//! `T(f, T) * A`, the truncated lower-triangular Toeplitz matrix of a power
//! series `f` applied to a tall matrix `A`. Below [`DIRECT_THRESHOLD`] rows
//! this is a direct convolution; above it the columns are convolved with
//! overlap-save block FFTs.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Row count below which [`toeplitz_apply`] uses direct convolution.
pub const DIRECT_THRESHOLD: usize = 64;

/// MA polynomial `theta(L) = 1 + theta_1 L + ... + theta_q L^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaPoly {
    coeffs: Vec<f64>,
}

impl ThetaPoly {
    /// Builds a polynomial from `(theta_0, ..., theta_q)`; `theta_0` must be
    /// exactly one.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        match coeffs.first() {
            Some(&c) if c == 1.0 => {}
            Some(&c) => return Err(Error::LeadingCoefficient(c)),
            None => return Err(Error::LeadingCoefficient(f64::NAN)),
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { coeffs })
    }

    /// Builds `1 + tail[0] L + tail[1] L^2 + ...`.
    pub fn from_tail(tail: &[f64]) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(tail.len() + 1);
        coeffs.push(1.0);
        coeffs.extend_from_slice(tail);
        Self::new(coeffs)
    }

    /// The constant polynomial 1 (no MA part).
    pub fn identity() -> Self {
        Self { coeffs: vec![1.0] }
    }

    /// MA order q.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `(theta_0, ..., theta_q)`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `(theta_1, ..., theta_q)`, the free parameters.
    pub fn tail(&self) -> &[f64] {
        &self.coeffs[1..]
    }

    /// Polynomial product.
    pub fn mul(&self, other: &ThetaPoly) -> ThetaPoly {
        ThetaPoly {
            coeffs: poly_mul(&self.coeffs, &other.coeffs),
        }
    }

    /// Evaluates `theta(z)` at a complex point.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }
}

/// First `len` coefficients of a power series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTruncation(Vec<f64>);

impl SeriesTruncation {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `(T + p) x k` observation matrix whose first `p` rows are the
/// conditioning observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: DMatrix<f64>,
    p: usize,
}

impl SampleMatrix {
    pub fn new(values: DMatrix<f64>, p: usize) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::Dimension("sample has no columns".into()));
        }
        if values.nrows() <= p {
            return Err(Error::InsufficientSample(format!(
                "{} rows cannot hold {} conditioning rows plus at least one observation",
                values.nrows(),
                p
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("sample contains non-finite values".into()));
        }
        Ok(Self { values, p })
    }

    /// Builds a sample from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], p: usize) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension("ragged sample rows".into()));
        }
        let values = DMatrix::from_fn(rows.len(), k, |r, c| rows[r][c]);
        Self::new(values, p)
    }

    /// Number of effective observations T.
    pub fn t(&self) -> usize {
        self.values.nrows() - self.p
    }

    /// Series dimension k.
    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    /// Number of conditioning rows p.
    pub fn p(&self) -> usize {
        self.p
    }

    /// The full `(T + p) x k` matrix.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// `X`, the `T x k` block of rows `p+1 ..= T+p`.
    pub fn observations(&self) -> DMatrix<f64> {
        self.lagged(0)
    }

    /// `L^i X`, rows `p-i+1 ..= T+p-i`. Panics if `i > p`.
    pub fn lagged(&self, i: usize) -> DMatrix<f64> {
        assert!(i <= self.p, "lag {i} exceeds conditioning rows {}", self.p);
        self.values.rows(self.p - i, self.t()).into_owned()
    }

    /// Drops the first `skip` rows and designates `p` of the remainder as
    /// conditioning rows.
    pub fn window(&self, skip: usize, p: usize) -> Result<Self> {
        if skip >= self.values.nrows() {
            return Err(Error::InsufficientSample("window skips every row".into()));
        }
        let rows = self.values.nrows() - skip;
        Self::new(self.values.rows(skip, rows).into_owned(), p)
    }
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// First `len` coefficients of `num(L) / den(L)`, `den[0] == 1`.
pub(crate) fn divide_series(num: &[f64], den: &[f64], len: usize) -> Vec<f64> {
    debug_assert_eq!(den.first().copied(), Some(1.0));
    let mut out = vec![0.0; len];
    for j in 0..len {
        let mut acc = num.get(j).copied().unwrap_or(0.0);
        for (i, &d) in den.iter().enumerate().skip(1).take(j) {
            acc -= d * out[j - i];
        }
        out[j] = acc;
    }
    out
}

/// Truncated power series of `1 / theta(L)` to `t` terms, by the long
/// division recurrence `c_j = -sum_{i>=1} theta_i c_{j-i}`.
pub fn invert_series(theta: &ThetaPoly, t: usize) -> Result<SeriesTruncation> {
    if t == 0 {
        return Err(Error::InsufficientSample("series length must be at least 1".into()));
    }
    Ok(SeriesTruncation(divide_series(&[1.0], theta.coeffs(), t)))
}

/// `T(series, T) * a`: column-wise causal convolution truncated at `T` rows.
pub fn toeplitz_apply(series: &SeriesTruncation, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if series.len() != a.nrows() {
        return Err(Error::Dimension(format!(
            "series length {} does not match {} rows",
            series.len(),
            a.nrows()
        )));
    }
    Ok(causal_convolve(series.as_slice(), a))
}

/// Causal convolution of every column of `a` with `series`, truncated to
/// `a.nrows()` rows. Coefficients past `a.nrows()` are ignored and missing
/// ones are treated as zero.
pub(crate) fn causal_convolve(series: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
    let t = a.nrows();
    let used = &series[..series.len().min(t)];
    let m = used.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
    if t == 0 || a.ncols() == 0 || m == 0 {
        return DMatrix::zeros(t, a.ncols());
    }
    if t < DIRECT_THRESHOLD {
        direct_convolve(&used[..m], a)
    } else {
        OverlapSave::new(&used[..m], t).apply(a)
    }
}

pub(crate) fn direct_convolve(h: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
    let t = a.nrows();
    let mut out = DMatrix::zeros(t, a.ncols());
    for c in 0..a.ncols() {
        let x = a.column(c);
        let mut y = out.column_mut(c);
        for n in 0..t {
            let mut acc = 0.0;
            for (j, &hj) in h.iter().enumerate().take(n + 1) {
                acc += hj * x[n - j];
            }
            y[n] = acc;
        }
    }
    out
}

struct OverlapSave {
    n: usize,
    m: usize,
    filter: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl OverlapSave {
    fn new(h: &[f64], t: usize) -> Self {
        let m = h.len();
        // Short filters get many small blocks; a filter as long as the data
        // is a single linear convolution.
        let n = if 4 * m <= t {
            (4 * m).next_power_of_two()
        } else {
            (t + m - 1).next_power_of_two()
        };
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut filter = vec![Complex64::new(0.0, 0.0); n];
        for (f, &c) in filter.iter_mut().zip(h) {
            f.re = c;
        }
        forward.process(&mut filter);
        Self {
            n,
            m,
            filter,
            forward,
            inverse,
        }
    }

    fn apply(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let t = a.nrows();
        let columns: Vec<Vec<f64>> = (0..a.ncols())
            .into_par_iter()
            .map(|c| self.column(a.column(c).as_slice(), t))
            .collect();
        DMatrix::from_fn(t, a.ncols(), |r, c| columns[c][r])
    }

    fn column(&self, x: &[f64], t: usize) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let step = n - m + 1;
        let scale = 1.0 / n as f64;
        let zero = Complex64::new(0.0, 0.0);
        let mut out = vec![0.0; t];
        let mut buf = vec![zero; n];
        let scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        let mut scratch = vec![zero; scratch_len];
        let mut start = 0;
        while start < t {
            for (i, b) in buf.iter_mut().enumerate() {
                let idx = (start + i).checked_sub(m - 1);
                *b = match idx {
                    Some(j) if j < t => Complex64::new(x[j], 0.0),
                    _ => zero,
                };
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for (b, f) in buf.iter_mut().zip(&self.filter) {
                *b *= f;
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            for s in 0..step.min(t - start) {
                out[start + s] = buf[m - 1 + s].re * scale;
            }
            start += step;
        }
        out
    }
}

/// `T(series, T) L^i X` for `i = 0..=p` from one convolution of the whole
/// sample, backing out the contribution of the first `p - i` rows.
/// `series` must hold at least `T + p` coefficients.
pub(crate) fn series_lags(series: &[f64], xhat: &SampleMatrix) -> Vec<DMatrix<f64>> {
    let (t, p, k) = (xhat.t(), xhat.p(), xhat.k());
    let full = causal_convolve(&series[..t + p], xhat.values());
    let raw = xhat.values();
    (0..=p)
        .map(|i| {
            let head = p - i;
            let mut block = full.rows(head, t).into_owned();
            for s in 0..t {
                for j in 0..head {
                    let c = series[head + s - j];
                    if c != 0.0 {
                        for col in 0..k {
                            block[(s, col)] -= c * raw[(j, col)];
                        }
                    }
                }
            }
            block
        })
        .collect()
}

/// `Theta_T^{-1} L^i X` for `i = 0..=p`, where `p` is the sample's number
/// of conditioning rows.
pub fn theta_inverse_lags(theta: &ThetaPoly, xhat: &SampleMatrix) -> Result<Vec<DMatrix<f64>>> {
    let series = invert_series(theta, xhat.t() + xhat.p())?;
    Ok(series_lags(series.as_slice(), xhat))
}

/// Shifts the rows of `a` down by `lag`, filling with zeros (`L^lag` applied
/// inside a truncated Toeplitz product).
pub(crate) fn shift_rows(a: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let t = a.nrows();
    let mut out = DMatrix::zeros(t, a.ncols());
    if lag < t {
        out.rows_mut(lag, t - lag).copy_from(&a.rows(0, t - lag));
    }
    out
}
