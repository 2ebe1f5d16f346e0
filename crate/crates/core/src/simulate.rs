//! Synthetic VARMA samples and the reduction of a matrix-MA VARMA to an
//! equivalent system with a scalar MA polynomial.
//!
//! In column form a matrix system reads `D(L) x_t = mu + N(L) e_t`.
//! Multiplying by the adjugate of `N(L)` gives
//! `adj(N) D x_t = adj(N(1)) mu + det N(L) e_t`, whose MA part is the scalar
//! polynomial `det N(L)`.

use nalgebra::{Cholesky, DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::likelihood::VarmaSpec;
use crate::polyops::{SampleMatrix, ThetaPoly};

/// Random stream and warm-up for a simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseConfig {
    pub seed: u64,
    /// Rows generated and discarded before the returned sample; defaults to
    /// `10 (p + q + 50)`.
    pub burn_in: Option<usize>,
    /// Simulate even when the AR part is explosive.
    pub allow_unstable: bool,
}

impl NoiseConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            burn_in: None,
            allow_unstable: false,
        }
    }
}

/// Spectral radius of the VAR companion matrix.
pub fn ar_spectral_radius(phi: &[DMatrix<f64>]) -> f64 {
    let p = phi.len();
    if p == 0 {
        return 0.0;
    }
    let k = phi[0].nrows();
    let mut companion = DMatrix::zeros(k * p, k * p);
    for (i, m) in phi.iter().enumerate() {
        companion.view_mut((0, i * k), (k, k)).copy_from(&m.transpose());
    }
    for i in 1..p {
        companion.view_mut((i * k, (i - 1) * k), (k, k)).fill_with_identity();
    }
    match Schur::try_new(companion.clone(), f64::EPSILON, 10_000) {
        Some(s) => s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        // Fall back to a norm bound on the power sequence.
        None => {
            let mut power = companion.clone();
            for _ in 0..6 {
                power = &power * &power;
            }
            power.norm().powf(1.0 / 64.0)
        }
    }
}

/// `F` with `F F' = omega` for a positive semi-definite `omega`.
fn covariance_factor(omega: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = Cholesky::new(omega.clone()) {
        return c.l();
    }
    let eig = SymmetricEigen::new(omega.clone());
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * DMatrix::from_diagonal(&root)
}

/// Draws `T + p` rows from the model, starting from zeros and discarding
/// the burn-in. Only the constant term is used; models carrying other
/// deterministic coefficients are rejected.
pub fn simulate_varma(spec: &VarmaSpec, t: usize, noise: &NoiseConfig) -> Result<SampleMatrix> {
    if t == 0 {
        return Err(Error::InsufficientSample("T must be at least 1".into()));
    }
    if spec.exog().nrows() > 0 {
        return Err(Error::Dimension("simulation supports only the constant term".into()));
    }
    let (k, p, q) = (spec.k(), spec.p(), spec.q());
    let radius = ar_spectral_radius(spec.phi());
    if radius >= 1.0 && !noise.allow_unstable {
        return Err(Error::UnstableAr(radius));
    }
    let burn = noise.burn_in.unwrap_or(10 * (p + q + 50));
    let total = burn + t + p;
    let eps = draw_noise(spec.omega(), total, noise.seed);

    let theta = spec.theta().coeffs();
    let mut x = DMatrix::zeros(total, k);
    for r in 0..total {
        let mut row = spec.mu().transpose() + eps.row(r);
        for (j, &th) in theta.iter().enumerate().skip(1).take(r) {
            row += eps.row(r - j) * th;
        }
        for (i, phi) in spec.phi().iter().enumerate() {
            if r > i {
                row += x.row(r - i - 1) * phi;
            }
        }
        x.row_mut(r).copy_from(&row);
    }
    SampleMatrix::new(x.rows(burn, t + p).into_owned(), p)
}

/// Draws `T + p` rows from a matrix-MA system, `p = deg D`, in row
/// convention `X_t = mu' + sum X_{t-i} Phi_i + eps_t + sum eps_{t-j} Theta_j`
/// with `Phi_i = -D_i'` and `Theta_j = N_j'`.
pub fn simulate_matrix_varma(m: &MatrixVarma, t: usize, noise: &NoiseConfig) -> Result<SampleMatrix> {
    if t == 0 {
        return Err(Error::InsufficientSample("T must be at least 1".into()));
    }
    let k = m.k();
    let phi: Vec<DMatrix<f64>> = m.d[1..].iter().map(|a| -a.transpose()).collect();
    let theta: Vec<DMatrix<f64>> = m.n[1..].iter().map(|a| a.transpose()).collect();
    let (p, q) = (phi.len(), theta.len());
    let radius = ar_spectral_radius(&phi);
    if radius >= 1.0 && !noise.allow_unstable {
        return Err(Error::UnstableAr(radius));
    }
    let burn = noise.burn_in.unwrap_or(10 * (p + q + 50));
    let total = burn + t + p;
    let eps = draw_noise(&m.omega, total, noise.seed);
    let mut x = DMatrix::zeros(total, k);
    for r in 0..total {
        let mut row = m.mu.transpose() + eps.row(r);
        for (j, th) in theta.iter().enumerate() {
            if r > j {
                row += eps.row(r - j - 1) * th;
            }
        }
        for (i, ph) in phi.iter().enumerate() {
            if r > i {
                row += x.row(r - i - 1) * ph;
            }
        }
        x.row_mut(r).copy_from(&row);
    }
    SampleMatrix::new(x.rows(burn, t + p).into_owned(), p)
}

/// `rows x k` Gaussian innovations with covariance `omega`.
fn draw_noise(omega: &DMatrix<f64>, rows: usize, seed: u64) -> DMatrix<f64> {
    let k = omega.nrows();
    let factor = covariance_factor(omega);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = DMatrix::zeros(rows, k);
    let mut z = DVector::zeros(k);
    for r in 0..rows {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        eps.row_mut(r).copy_from(&(&factor * &z).transpose());
    }
    eps
}

/// Matrix polynomial as a list of `k x k` coefficients.
pub type MatrixPoly = Vec<DMatrix<f64>>;

/// `D(L) x_t = mu + N(L) e_t` in column form with matrix MA polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixVarma {
    n: MatrixPoly,
    d: MatrixPoly,
    mu: DVector<f64>,
    omega: DMatrix<f64>,
}

impl MatrixVarma {
    /// `n[0]` and `d[0]` must be the identity.
    pub fn new(n: MatrixPoly, d: MatrixPoly, mu: DVector<f64>, omega: DMatrix<f64>) -> Result<Self> {
        let k = omega.nrows();
        if k == 0 || omega.ncols() != k || mu.len() != k {
            return Err(Error::InvalidMatrixModel("inconsistent dimensions".into()));
        }
        if n.is_empty() || d.is_empty() {
            return Err(Error::InvalidMatrixModel("polynomials need a leading coefficient".into()));
        }
        if n.iter().chain(&d).any(|m| m.shape() != (k, k)) {
            return Err(Error::InvalidMatrixModel(format!("coefficients must be {k} x {k}")));
        }
        let eye = DMatrix::identity(k, k);
        if n[0].determinant() == 0.0 {
            return Err(Error::SingularLeadingMa);
        }
        if n[0] != eye || d[0] != eye {
            return Err(Error::InvalidMatrixModel("leading coefficients must be the identity".into()));
        }
        Ok(Self { n, d, mu, omega })
    }

    /// From row-convention coefficients
    /// `X_t = mu + sum X_{t-i} Phi_i + eps_t + sum eps_{t-j} Theta_j`.
    pub fn from_row_form(phi: &[DMatrix<f64>], theta: &[DMatrix<f64>], mu: DVector<f64>, omega: DMatrix<f64>) -> Result<Self> {
        let k = omega.nrows();
        let eye = DMatrix::identity(k, k);
        let mut d = vec![eye.clone()];
        d.extend(phi.iter().map(|m| -m.transpose()));
        let mut n = vec![eye];
        n.extend(theta.iter().map(|m| m.transpose()));
        Self::new(n, d, mu, omega)
    }

    pub fn k(&self) -> usize {
        self.omega.nrows()
    }

    pub fn n(&self) -> &[DMatrix<f64>] {
        &self.n
    }

    pub fn d(&self) -> &[DMatrix<f64>] {
        &self.d
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }
}

/// Result of reducing a matrix-MA system to scalar MA form.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarForm {
    /// `det N(L)`
    pub theta: ThetaPoly,
    /// `adj(N(L)) D(L)` in column form, leading coefficient the identity.
    pub ar: MatrixPoly,
    /// Row-convention AR coefficients, `Phi_i = -ar_i'`.
    pub phi: Vec<DMatrix<f64>>,
    /// Row-convention intercept `(adj(N(1)) mu)'`.
    pub mu: DVector<f64>,
    pub omega: DMatrix<f64>,
    /// Largest deviation between `N(z)^{-1} D(z)` and
    /// `adj(N(z)) D(z) / det N(z)` over 16 points on `|z| = 0.5`.
    pub transfer_deviation: f64,
}

impl ScalarForm {
    pub fn to_spec(&self) -> Result<VarmaSpec> {
        VarmaSpec::new(self.theta.clone(), self.mu.clone(), self.phi.clone(), self.omega.clone())
    }
}

type Poly = Vec<f64>;

fn padd(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, v) in a.iter().enumerate() {
        out[i] += v;
    }
    for (i, v) in b.iter().enumerate() {
        out[i] += v;
    }
    out
}

fn pmul(a: &[f64], b: &[f64]) -> Poly {
    crate::polyops::poly_mul(a, b)
}

fn entry_polys(m: &[DMatrix<f64>]) -> Vec<Vec<Poly>> {
    let k = m[0].nrows();
    (0..k)
        .map(|i| (0..k).map(|j| m.iter().map(|c| c[(i, j)]).collect()).collect())
        .collect()
}

/// Determinant of a polynomial matrix by cofactor expansion.
fn poly_det(a: &[Vec<Poly>]) -> Poly {
    let k = a.len();
    match k {
        0 => vec![1.0],
        1 => a[0][0].clone(),
        _ => {
            let mut out = vec![0.0];
            for (j, head) in a[0].iter().enumerate() {
                let minor: Vec<Vec<Poly>> = a[1..]
                    .iter()
                    .map(|row| row.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, p)| p.clone()).collect())
                    .collect();
                let term = pmul(head, &poly_det(&minor));
                let signed: Poly = if j % 2 == 0 { term } else { term.iter().map(|v| -v).collect() };
                out = padd(&out, &signed);
            }
            out
        }
    }
}

/// `(det, adjugate)` of a polynomial matrix by cofactors.
fn cofactor_det_adj(a: &[Vec<Poly>]) -> (Poly, Vec<Vec<Poly>>) {
    let k = a.len();
    let det = poly_det(a);
    let mut adj = vec![vec![vec![0.0]; k]; k];
    if k == 1 {
        adj[0][0] = vec![1.0];
        return (det, adj);
    }
    for i in 0..k {
        for j in 0..k {
            let minor: Vec<Vec<Poly>> = a
                .iter()
                .enumerate()
                .filter(|&(r, _)| r != i)
                .map(|(_, row)| row.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, p)| p.clone()).collect())
                .collect();
            let m = poly_det(&minor);
            adj[j][i] = if (i + j) % 2 == 0 { m } else { m.iter().map(|v| -v).collect() };
        }
    }
    (det, adj)
}

/// `(det, adjugate)` by evaluation at roots of unity and an inverse DFT.
fn interpolated_det_adj(n: &[DMatrix<f64>]) -> (Poly, Vec<Vec<Poly>>) {
    let k = n[0].nrows();
    let deg = n.len() - 1;
    let points = k * deg + 1;
    let mut det_vals = Vec::with_capacity(points);
    let mut adj_vals = Vec::with_capacity(points);
    for s in 0..points {
        let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * s as f64 / points as f64);
        let m = eval_matrix_poly(n, z);
        let lu = m.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().unwrap_or_else(|| DMatrix::zeros(k, k));
        det_vals.push(det);
        adj_vals.push(inv * det);
    }
    let idft = |vals: &[Complex64]| -> Poly {
        (0..points)
            .map(|c| {
                let sum: Complex64 = vals
                    .iter()
                    .enumerate()
                    .map(|(s, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (c * s) as f64 / points as f64))
                    .sum();
                sum.re / points as f64
            })
            .collect()
    };
    let det = idft(&det_vals);
    let adj = (0..k)
        .map(|i| (0..k).map(|j| idft(&adj_vals.iter().map(|m| m[(i, j)]).collect::<Vec<_>>())).collect())
        .collect();
    (det, adj)
}

fn eval_matrix_poly(m: &[DMatrix<f64>], z: Complex64) -> DMatrix<Complex64> {
    let k = m[0].nrows();
    let mut out = DMatrix::zeros(k, k);
    let mut power = Complex64::new(1.0, 0.0);
    for c in m {
        out += c.map(|v| Complex64::new(v, 0.0)) * power;
        power *= z;
    }
    out
}

fn trim(p: &mut Poly, scale: f64) {
    while p.len() > 1 && p.last().is_some_and(|v| v.abs() <= 1e-13 * scale) {
        p.pop();
    }
}

const COFACTOR_MAX_K: usize = 4;

fn det_adj(n: &[DMatrix<f64>], cofactor: bool) -> (Poly, Vec<Vec<Poly>>) {
    if cofactor {
        cofactor_det_adj(&entry_polys(n))
    } else {
        interpolated_det_adj(n)
    }
}

fn convert(m: &MatrixVarma, cofactor: bool) -> Result<ScalarForm> {
    let k = m.k();
    let (mut det, adj) = det_adj(&m.n, cofactor);
    let scale = det.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    trim(&mut det, scale);
    if det[0].abs() <= 1e-13 * scale {
        return Err(Error::SingularLeadingMa);
    }
    let lead = det[0];
    let theta = ThetaPoly::new(std::iter::once(1.0).chain(det[1..].iter().map(|v| v / lead)).collect())?;

    // adj(N) D, entry (i, j) = sum_l adj[i][l] * D[l][j].
    let d = entry_polys(&m.d);
    let mut ar_entries = vec![vec![vec![0.0]; k]; k];
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                ar_entries[i][j] = padd(&ar_entries[i][j], &pmul(&adj[i][l], &d[l][j]));
            }
        }
    }
    let degree = ar_entries
        .iter()
        .flatten()
        .map(|p| {
            let mut p = p.clone();
            trim(&mut p, scale);
            p.len() - 1
        })
        .max()
        .unwrap_or(0);
    let ar: MatrixPoly = (0..=degree)
        .map(|c| DMatrix::from_fn(k, k, |i, j| ar_entries[i][j].get(c).copied().unwrap_or(0.0) / lead))
        .collect();
    let phi = ar[1..].iter().map(|a| -a.transpose()).collect();

    let adj_at_one = DMatrix::from_fn(k, k, |i, j| adj[i][j].iter().sum::<f64>() / lead);
    let mu = &adj_at_one * &m.mu;

    let mut deviation = 0.0f64;
    for s in 0..16 {
        let z = Complex64::from_polar(0.5, 2.0 * std::f64::consts::PI * s as f64 / 16.0);
        let nz = eval_matrix_poly(&m.n, z);
        let dz = eval_matrix_poly(&m.d, z);
        let direct = nz.lu().solve(&dz).ok_or(Error::SingularLeadingMa)?;
        let reduced = eval_matrix_poly(&ar, z) / theta.eval(z);
        deviation = deviation.max((direct - reduced).iter().map(|v| v.norm()).fold(0.0, f64::max));
    }

    Ok(ScalarForm {
        theta,
        ar,
        phi,
        mu,
        omega: m.omega.clone(),
        transfer_deviation: deviation,
    })
}

/// `theta = det N(L)` and AR polynomial `adj(N(L)) D(L)`; exact cofactor
/// arithmetic up to `k = 4`, interpolation at roots of unity beyond.
pub fn matrix_to_scalar(m: &MatrixVarma) -> Result<ScalarForm> {
    convert(m, m.k() <= COFACTOR_MAX_K)
}
