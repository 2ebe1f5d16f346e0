//! Multi-start maximisation of the profile likelihood over the
//! invertibility region.
//!
//! Starting points come from a partition of the unit disc: the real line
//! is split into `(-1, -r]`, `[-r, r]`, `[r, 1)` and the upper half disc
//! into the half disc of radius `r` and the two quarter annuli beyond it,
//! with `r = 3^{-1/2}` so the three complex regions have equal area. Each
//! way of distributing `q` inverse roots over these regions gives one seed,
//! with every root placed at its region's midpoint or centroid.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradient::value_and_gradient;
use crate::likelihood::{profile_loglik, RegressorSet};
use crate::optim::{minimize, LbfgsOptions};
use crate::polyops::{SampleMatrix, ThetaPoly};
use crate::roots::{canonicalize, roots_of, vieta, RootSet};

/// Objective value (for minimisation of `-Lbar`) outside the region.
const PENALTY: f64 = 1e10;
const BOUNDARY_MARGIN: f64 = 1e-3;
const TIE_TOL: f64 = 1e-9;

/// Roots per region: real intervals left/middle/right, then the complex
/// half disc, first-quadrant and second-quadrant annuli.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionAllocation {
    pub real: [usize; 3],
    pub complex: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedGrid {
    pub seeds: Vec<ThetaPoly>,
    pub regions: Vec<RegionAllocation>,
}

impl SeedGrid {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

/// Closed-form number of region allocations for order `q`.
pub fn seed_count(q: usize) -> usize {
    let q = q as u128;
    let n = if q % 2 == 0 {
        (q + 2) * (q + 4) * (q + 6) * (q + 8) * (2 * q + 5)
    } else {
        (q + 1) * (q + 3) * (q + 5) * (q + 7) * (2 * q + 13)
    };
    (n / 1920) as usize
}

fn compositions3(n: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in (0..=n).rev() {
        for b in (0..=n - a).rev() {
            out.push([a, b, n - a - b]);
        }
    }
    out
}

/// Representative points of the six regions.
fn region_points() -> ([f64; 3], [Complex64; 3]) {
    let r = 3f64.sqrt().recip();
    let mid = (1.0 + r) / 2.0;
    let half_disc = 4.0 * r / (3.0 * PI);
    let annulus = 4.0 / (3.0 * PI) * (1.0 - r.powi(3)) / (1.0 - r * r);
    (
        [-mid, 0.0, mid],
        [
            Complex64::new(0.0, half_disc),
            Complex64::new(annulus, annulus),
            Complex64::new(-annulus, annulus),
        ],
    )
}

/// Deterministic starting points for order `q`, one per region
/// allocation.
pub fn seed_grid(q: usize) -> SeedGrid {
    let (reals, complexes) = region_points();
    let mut seeds = Vec::new();
    let mut regions = Vec::new();
    for qc in 0..=q / 2 {
        let qr = q - 2 * qc;
        for real in compositions3(qr) {
            for complex in compositions3(qc) {
                let mut roots = Vec::with_capacity(q);
                for (count, &x) in real.iter().zip(&reals) {
                    roots.extend(std::iter::repeat_n(Complex64::new(x, 0.0), *count));
                }
                for (count, &z) in complex.iter().zip(&complexes) {
                    for _ in 0..*count {
                        roots.push(z);
                        roots.push(z.conj());
                    }
                }
                let set = RootSet::new(roots).expect("seed roots are conjugate closed");
                seeds.push(vieta(&set));
                regions.push(RegionAllocation { real, complex });
            }
        }
    }
    SeedGrid { seeds, regions }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Relative gradient tolerance: stop when `|grad|_inf <= tol (1 + |Lbar|)`.
    pub grad_tol: f64,
    /// Starting points overriding the region grid.
    pub seeds: Option<Vec<ThetaPoly>>,
    /// Worker threads for the multi-start; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-6,
            seeds: None,
            threads: None,
        }
    }
}

/// Outcome of one local optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct StartTrace {
    pub start: Vec<f64>,
    pub start_loglik: f64,
    pub end: Vec<f64>,
    /// `-inf` when the start could not be evaluated.
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Canonical (all inverse roots in the closed unit disc).
    pub theta: ThetaPoly,
    pub mu: DVector<f64>,
    /// Coefficients of the non-constant deterministic regressors.
    pub exog: DMatrix<f64>,
    pub phi: Vec<DMatrix<f64>>,
    pub omega: DMatrix<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_params: usize,
    /// Effective sample size.
    pub t: usize,
    pub starts: Vec<StartTrace>,
    /// Index into `starts` of the winning start.
    pub best_start: Option<usize>,
    pub converged: bool,
    /// Some inverse root has modulus above `1 - 1e-3`.
    pub boundary_flag: bool,
    pub ridge_applied: bool,
}

/// `q + k n_regs + p k^2 + k (k + 1) / 2`.
pub fn parameter_count(k: usize, p: usize, q: usize, n_regs: usize) -> usize {
    q + k * n_regs + p * k * k + k * (k + 1) / 2
}

/// `(aic, bic)` for a log-likelihood with `n_params` free parameters on
/// `t` observations.
pub fn information_criteria(loglik: f64, t: f64, n_params: usize) -> (f64, f64) {
    let n = n_params as f64;
    (-2.0 * loglik + 2.0 * n, -2.0 * loglik + t.ln() * n)
}

fn objective(x: &[f64], xhat: &SampleMatrix, regs: &RegressorSet) -> (f64, Vec<f64>) {
    let zero = vec![0.0; x.len()];
    let Ok(theta) = ThetaPoly::from_tail(x) else {
        return (PENALTY, zero);
    };
    let outside = roots_of(&theta).max_modulus() - 1.0;
    if outside >= 0.0 {
        return (PENALTY + outside, zero);
    }
    match value_and_gradient(&theta, xhat, regs) {
        Ok((_, g)) if g.loglik.is_finite() => (-g.loglik, g.grad.iter().map(|v| -v).collect()),
        _ => (PENALTY, zero),
    }
}

fn run_start(seed: &ThetaPoly, xhat: &SampleMatrix, regs: &RegressorSet, opts: &LbfgsOptions) -> StartTrace {
    let x0 = seed.tail().to_vec();
    let (f0, _) = objective(&x0, xhat, regs);
    if f0 >= PENALTY {
        return StartTrace {
            start: x0.clone(),
            start_loglik: f64::NEG_INFINITY,
            end: x0,
            loglik: f64::NEG_INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    let out = minimize(|x| objective(x, xhat, regs), &x0, opts);
    StartTrace {
        start: x0,
        start_loglik: -f0,
        end: out.x,
        loglik: -out.f,
        iterations: out.iterations,
        converged: out.converged,
    }
}

/// Maximises the profile likelihood over `theta` for a VARMA(p, q) with
/// scalar MA part.
pub fn fit(xhat: &SampleMatrix, p: usize, q: usize, regs: &RegressorSet, options: &FitOptions) -> Result<FitResult> {
    if xhat.p() != p {
        return Err(Error::Dimension(format!("sample has {} conditioning rows, p = {p}", xhat.p())));
    }
    let n_design = regs.n_columns(xhat.k(), p);
    if xhat.t() <= n_design {
        return Err(Error::InsufficientSample(format!(
            "T = {} must exceed the {n_design} regression columns",
            xhat.t()
        )));
    }

    let mut starts = Vec::new();
    let mut best_start = None;
    let mut converged = true;
    let theta = if q == 0 {
        ThetaPoly::identity()
    } else {
        let seeds = match &options.seeds {
            Some(s) => {
                if let Some(bad) = s.iter().find(|t| t.order() != q) {
                    return Err(Error::Dimension(format!("seed of order {} for q = {q}", bad.order())));
                }
                s.clone()
            }
            None => seed_grid(q).seeds,
        };
        let opts = LbfgsOptions {
            max_iters: options.max_iters,
            grad_tol: options.grad_tol,
            ..LbfgsOptions::default()
        };
        let run = || -> Vec<StartTrace> { seeds.par_iter().map(|s| run_start(s, xhat, regs, &opts)).collect() };
        starts = match options.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Dimension(format!("thread pool: {e}")))?
                .install(run),
            None => run(),
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in starts.iter().enumerate() {
            if s.loglik.is_finite() && best.is_none_or(|(_, b)| s.loglik > b + TIE_TOL) {
                best = Some((i, s.loglik));
            }
        }
        let (i, _) = best.ok_or(Error::AllStartsFailed)?;
        best_start = Some(i);
        converged = starts[i].converged;
        ThetaPoly::from_tail(&starts[i].end)?
    };

    let k = xhat.k();
    let (canonical, _, _) = canonicalize(&theta, &DMatrix::identity(k, k));
    let report = profile_loglik(&canonical, xhat, regs)?;
    let fitted = report.fitted.expect("profile attaches fitted values");
    let boundary_flag = q > 0 && roots_of(&canonical).max_modulus() > 1.0 - BOUNDARY_MARGIN;
    let n_params = parameter_count(k, p, q, regs.n_deterministic());
    let (aic, bic) = information_criteria(report.loglik, xhat.t() as f64, n_params);
    Ok(FitResult {
        theta: canonical,
        mu: fitted.mu,
        exog: fitted.exog,
        phi: fitted.phi,
        omega: fitted.omega,
        loglik: report.loglik,
        aic,
        bic,
        n_params,
        t: xhat.t(),
        starts,
        best_start,
        converged,
        boundary_flag,
        ridge_applied: report.ridge_applied,
    })
}

/// One row of an order scan.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderCandidate {
    pub p: usize,
    pub q: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelection {
    pub p: usize,
    pub q: usize,
    pub fit: FitResult,
    pub candidates: Vec<OrderCandidate>,
}

/// Scans every `(p, q)` with `p, q <= bound` (a McMillan-degree upper
/// bound) and keeps the smallest BIC. All candidates condition on the
/// first `bound` rows, so they share one effective sample.
pub fn select_order(data: &DMatrix<f64>, bound: usize, regs: &RegressorSet, options: &FitOptions) -> Result<OrderSelection> {
    let full = SampleMatrix::new(data.clone(), bound)?;
    let mut best: Option<OrderSelection> = None;
    let mut candidates = Vec::new();
    for p in 0..=bound {
        let xhat = full.window(bound - p, p)?;
        for q in 0..=bound {
            let opts = FitOptions { seeds: None, ..options.clone() };
            let Ok(f) = fit(&xhat, p, q, regs, &opts) else {
                continue;
            };
            candidates.push(OrderCandidate {
                p,
                q,
                loglik: f.loglik,
                aic: f.aic,
                bic: f.bic,
            });
            if best.as_ref().is_none_or(|b| f.bic < b.fit.bic) {
                best = Some(OrderSelection {
                    p,
                    q,
                    fit: f,
                    candidates: Vec::new(),
                });
            }
        }
    }
    let mut best = best.ok_or(Error::AllStartsFailed)?;
    best.candidates = candidates;
    Ok(best)
}
