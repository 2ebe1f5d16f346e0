//! Inverse roots of the MA polynomial: the Vieta map and its Jacobian,
//! invertibility tests, and the root-inversion maps that leave the
//! likelihood unchanged.
//!
//! Roots here are always the *inverse* roots `lambda_i` in the factorisation
//! `theta(L) = prod (1 - lambda_i L)`, i.e. the roots of
//! `z^q + theta_1 z^{q-1} + ... + theta_q`. Invertibility means every
//! `|lambda_i| < 1`.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::polyops::ThetaPoly;

const REAL_SNAP: f64 = 1e-10;
const PAIR_TOL: f64 = 1e-8;
const DISTINCT_TOL: f64 = 1e-8;

/// Multiset of inverse roots, closed under complex conjugation.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    roots: Vec<Complex64>,
    partner: Vec<usize>,
}

impl RootSet {
    /// Pairs conjugates greedily and snaps nearly-real roots onto the real
    /// axis. Fails when some root has no conjugate partner.
    pub fn new(roots: Vec<Complex64>) -> Result<Self> {
        pair_conjugates(roots, false)
    }

    /// A set of real roots.
    pub fn real(values: &[f64]) -> Self {
        Self {
            roots: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            partner: (0..values.len()).collect(),
        }
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Index of the conjugate of root `i` (itself for real roots).
    pub fn partner(&self, i: usize) -> usize {
        self.partner[i]
    }

    pub fn max_modulus(&self) -> f64 {
        self.roots.iter().map(|r| r.norm()).fold(0.0, f64::max)
    }

    /// Smallest pairwise distance; infinite for fewer than two roots.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.roots.len() {
            for j in i + 1..self.roots.len() {
                best = best.min((self.roots[i] - self.roots[j]).norm());
            }
        }
        best
    }
}

fn pair_conjugates(mut roots: Vec<Complex64>, force: bool) -> Result<RootSet> {
    let n = roots.len();
    let mut partner: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if partner[i].is_some() {
            continue;
        }
        if roots[i].im.abs() <= REAL_SNAP {
            roots[i].im = 0.0;
            partner[i] = Some(i);
            continue;
        }
        let tol = PAIR_TOL * (1.0 + roots[i].norm());
        let candidate = (i + 1..n)
            .filter(|&j| partner[j].is_none())
            .map(|j| (j, (roots[i] - roots[j].conj()).norm()))
            .filter(|&(_, d)| force || d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match candidate {
            Some((j, _)) => {
                let avg = (roots[i] + roots[j].conj()) * 0.5;
                roots[i] = avg;
                roots[j] = avg.conj();
                partner[i] = Some(j);
                partner[j] = Some(i);
            }
            None if force => {
                roots[i].im = 0.0;
                partner[i] = Some(i);
            }
            None => return Err(Error::NotConjugateClosed),
        }
    }
    Ok(RootSet {
        roots,
        partner: partner.into_iter().map(|p| p.expect("paired")).collect(),
    })
}

/// Real coefficients of `prod (1 - lambda_i L)`.
pub fn vieta(roots: &RootSet) -> ThetaPoly {
    let coeffs = complex_product(roots.roots().iter().copied());
    ThetaPoly::new(coeffs.iter().map(|c| c.re).collect()).expect("leading coefficient is exactly one")
}

fn complex_product(roots: impl Iterator<Item = Complex64>) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        coeffs.push(Complex64::new(0.0, 0.0));
        for j in (1..coeffs.len()).rev() {
            let prev = coeffs[j - 1];
            coeffs[j] -= r * prev;
        }
    }
    coeffs
}

/// Inverse roots of `theta(L)` from the eigenvalues of the companion matrix
/// of `z^q + theta_1 z^{q-1} + ... + theta_q`, polished by Newton steps.
/// Roots are returned sorted by real part, conjugates adjacent.
pub fn roots_of(theta: &ThetaPoly) -> RootSet {
    let q = theta.order();
    if q == 0 {
        return RootSet::real(&[]);
    }
    let c = theta.coeffs();
    let companion = DMatrix::from_fn(q, q, |r, col| {
        if r == 0 {
            -c[col + 1]
        } else if r == col + 1 {
            1.0
        } else {
            0.0
        }
    });
    // The Schur iteration can stall on highly repeated roots; fall back to
    // simultaneous Aberth iteration when it does.
    let mut roots: Vec<Complex64> = match Schur::try_new(companion, f64::EPSILON, 5000) {
        Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
        None => aberth(c),
    };
    for z in roots.iter_mut() {
        *z = polish(c, *z);
    }
    roots.sort_by(|a, b| {
        a.re.total_cmp(&b.re)
            .then(a.im.abs().total_cmp(&b.im.abs()))
            .then(b.im.total_cmp(&a.im))
    });
    pair_conjugates(roots, true).expect("forced pairing cannot fail")
}

/// Simultaneous root iteration for the monic polynomial with coefficients
/// `c` (leading one first).
fn aberth(c: &[f64]) -> Vec<Complex64> {
    let q = c.len() - 1;
    let bound = 1.0 + c[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut z: Vec<Complex64> = (0..q)
        .map(|i| Complex64::from_polar(bound * 0.5, 2.0 * std::f64::consts::PI * (i as f64 + 0.25) / q as f64))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..q {
            let (v, d) = monic_eval(c, z[i]);
            if v.norm() == 0.0 {
                continue;
            }
            let ratio = v / d;
            let repulsion: Complex64 = (0..q).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm());
            }
        }
        if moved < 1e-15 * bound {
            break;
        }
    }
    z
}

fn monic_eval(c: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut value = Complex64::new(1.0, 0.0);
    let mut deriv = Complex64::new(0.0, 0.0);
    for &ci in &c[1..] {
        deriv = deriv * z + value;
        value = value * z + ci;
    }
    (value, deriv)
}

fn polish(c: &[f64], mut z: Complex64) -> Complex64 {
    let mut residual = monic_eval(c, z).0.norm();
    for _ in 0..3 {
        let (v, d) = monic_eval(c, z);
        if d.norm() == 0.0 {
            break;
        }
        let next = z - v / d;
        let r = monic_eval(c, next).0.norm();
        if !(r < residual) {
            break;
        }
        z = next;
        residual = r;
    }
    z
}

/// `max |lambda_i| < 1 - tol`.
pub fn is_invertible(theta: &ThetaPoly, tol: f64) -> bool {
    theta.order() == 0 || roots_of(theta).max_modulus() < 1.0 - tol
}

/// Explicit Schur-Cohn stability inequalities for `q <= 3` (strict, so the
/// boundary counts as non-invertible). `None` for larger orders.
pub fn schur_cohn(theta: &ThetaPoly) -> Option<bool> {
    let t = theta.tail();
    match *t {
        [] => Some(true),
        [t1] => Some(t1.abs() < 1.0),
        [t1, t2] => Some(t2 < 1.0 && 1.0 - t1 + t2 > 0.0 && 1.0 + t1 + t2 > 0.0),
        [t1, t2, t3] => Some(
            1.0 + t1 + t2 + t3 > 0.0
                && 3.0 + t1 - t2 - 3.0 * t3 > 0.0
                && 1.0 - t1 + t2 - t3 > 0.0
                && 1.0 - t2 - t3 * t3 + t1 * t3 > 0.0,
        ),
        _ => None,
    }
}

/// Indices of the roots to replace by their reciprocals.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IRSelection {
    indices: Vec<usize>,
}

impl IRSelection {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Every root of `roots`.
    pub fn all(roots: &RootSet) -> Self {
        Self::new((0..roots.len()).collect())
    }

    /// The roots strictly outside the unit circle.
    pub fn outside_unit_circle(roots: &RootSet) -> Self {
        Self::new(
            roots
                .roots()
                .iter()
                .enumerate()
                .filter(|(_, r)| r.norm() > 1.0)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    fn validate(&self, roots: &RootSet) -> Result<()> {
        for &i in &self.indices {
            if i >= roots.len() {
                return Err(Error::SelectionIndex(i));
            }
            if !self.contains(roots.partner(i)) {
                return Err(Error::NotConjugateClosed);
            }
            if roots.roots()[i].norm() == 0.0 {
                return Err(Error::ZeroRoot);
            }
        }
        Ok(())
    }
}

/// All conjugate-closed subsets of `roots`, the empty one first.
pub fn conjugate_closed_subsets(roots: &RootSet) -> Vec<IRSelection> {
    let orbits: Vec<Vec<usize>> = (0..roots.len())
        .filter(|&i| roots.partner(i) >= i)
        .map(|i| if roots.partner(i) == i { vec![i] } else { vec![i, roots.partner(i)] })
        .collect();
    (0u64..1 << orbits.len())
        .map(|mask| {
            IRSelection::new(
                orbits
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .flat_map(|(_, o)| o.iter().copied())
                    .collect(),
            )
        })
        .collect()
}

/// Replaces the selected roots by their reciprocals. Returns the new root
/// set (same indexing) and the covariance scale `(prod_S lambda_i)^2`.
pub fn invert_root_set(roots: &RootSet, sel: &IRSelection) -> Result<(RootSet, f64)> {
    sel.validate(roots)?;
    let mut out = roots.clone();
    let mut prod = Complex64::new(1.0, 0.0);
    for &i in sel.indices() {
        prod *= roots.roots[i];
        out.roots[i] = roots.roots[i].inv();
    }
    Ok((out, (prod * prod).re))
}

/// Root-inversion map: `theta_IR` has the selected inverse roots replaced by
/// their reciprocals and `Omega_IR = (prod_S lambda_i)^2 Omega`. Selection
/// indices refer to the ordering of [`roots_of`].
pub fn invert_roots(
    theta: &ThetaPoly,
    omega: &DMatrix<f64>,
    sel: &IRSelection,
) -> Result<(ThetaPoly, DMatrix<f64>)> {
    let (inverted, scale) = invert_root_set(&roots_of(theta), sel)?;
    Ok((vieta(&inverted), omega * scale))
}

/// Moves every root outside the unit circle inside it. Returns the new
/// polynomial, the rescaled covariance and the scale applied to it.
pub fn canonicalize(theta: &ThetaPoly, omega: &DMatrix<f64>) -> (ThetaPoly, DMatrix<f64>, f64) {
    let roots = roots_of(theta);
    let sel = IRSelection::outside_unit_circle(&roots);
    if sel.is_empty() {
        return (theta.clone(), omega.clone(), 1.0);
    }
    let (inverted, scale) = invert_root_set(&roots, &sel).expect("outside roots are nonzero and conjugate-closed");
    (vieta(&inverted), omega * scale, scale)
}

/// `d theta_i / d lambda_j`: column j holds the coefficients of
/// `-theta(L) / (1 - lambda_j L)`.
pub fn vieta_jacobian(roots: &RootSet) -> Result<DMatrix<Complex64>> {
    let q = roots.len();
    let sep = roots.min_separation();
    if sep <= DISTINCT_TOL * (1.0 + roots.max_modulus()) {
        return Err(Error::RepeatedRoots(sep));
    }
    let mut jac = DMatrix::from_element(q, q, Complex64::new(0.0, 0.0));
    for j in 0..q {
        let others = roots
            .roots()
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, &r)| r);
        for (i, c) in complex_product(others).into_iter().enumerate() {
            jac[(i, j)] = -c;
        }
    }
    Ok(jac)
}

/// Jacobian of the root-inversion map in coefficient space,
/// `J_v(theta_IR) diag(.., -lambda_i^{-2}, ..) J_v(theta)^{-1}`.
pub fn ir_jacobian(theta: &ThetaPoly, sel: &IRSelection) -> Result<DMatrix<f64>> {
    let roots = roots_of(theta);
    let (inverted, _) = invert_root_set(&roots, sel)?;
    let before = vieta_jacobian(&roots)?;
    let after = vieta_jacobian(&inverted)?;
    let q = roots.len();
    let inv = before
        .try_inverse()
        .ok_or(Error::RepeatedRoots(roots.min_separation()))?;
    let diag = DMatrix::from_fn(q, q, |r, c| {
        if r != c {
            Complex64::new(0.0, 0.0)
        } else if sel.contains(r) {
            -roots.roots()[r].powi(-2)
        } else {
            Complex64::new(1.0, 0.0)
        }
    });
    let jac = after * diag * inv;
    Ok(jac.map(|z| z.re))
}

/// Smallest achievable maximum distance between two root lists over all
/// pairings of their elements (lists of equal length, at most 8 roots).
pub fn matching_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len(), "root lists differ in length");
    assert!(a.len() <= 8, "matching is brute force");
    let mut perm: Vec<usize> = (0..b.len()).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let d = a.iter().zip(p).map(|(x, &j)| (x - b[j]).norm()).fold(0.0, f64::max);
        best = best.min(d);
    });
    best
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}
