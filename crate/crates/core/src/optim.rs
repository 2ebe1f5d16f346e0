//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOptions {
    pub max_iters: usize,
    /// Stop when `|grad|_inf <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    pub memory: usize,
    /// Largest coordinate change of the first trial step.
    pub max_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-6,
            memory: 8,
            max_step: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimises `f`, which returns the value and gradient at a point.
/// Non-finite values are treated as infeasible and rejected by the line
/// search.
pub(crate) fn minimize<F>(mut f: F, x0: &[f64], opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let done = |fx: f64, g: &[f64]| fx.is_finite() && inf_norm(g) <= opts.grad_tol * (1.0 + fx.abs());

    for iter in 0..opts.max_iters {
        if done(fx, &g) {
            return LbfgsOutcome { x, f: fx, iterations: iter, converged: true };
        }
        if !fx.is_finite() {
            return LbfgsOutcome { x, f: fx, iterations: iter, converged: false };
        }

        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = (opts.max_step / inf_norm(&d)).min(1.0);
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            let converged = done(fx, &g);
            return LbfgsOutcome { x, f: fx, iterations: iter, converged };
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let stalled = (fx - fnew).abs() <= 1e-15 * (1.0 + fx.abs());
        x = xn;
        fx = fnew;
        g = gn;
        if stalled {
            let converged = done(fx, &g);
            return LbfgsOutcome { x, f: fx, iterations: iter + 1, converged };
        }
    }
    let converged = done(fx, &g);
    LbfgsOutcome { x, f: fx, iterations: opts.max_iters, converged }
}
