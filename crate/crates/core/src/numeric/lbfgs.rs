use std::collections::VecDeque;

use super::{dot, norm_inf, NumericError};

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOptions {
    /// Number of (s, y) correction pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once the gradient infinity norm drops to this value.
    pub tol: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iters: 100,
            tol: 1e-6,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTol,
    MaxIters,
    /// The line search could not decrease the objective any further.
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective value after each accepted step, starting with f(x0).
    pub trace: Vec<f64>,
}

/// Minimizes `f` with limited-memory BFGS. `f` returns the objective and
/// writes the gradient into its second argument.
pub fn lbfgs_minimize<F>(mut f: F, x0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsResult, NumericError>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    if opts.memory == 0 {
        return Err(NumericError::ZeroMemory);
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(NumericError::NonFinite(0));
    }
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iter in 0..opts.max_iters {
        if norm_inf(&g) <= opts.tol {
            return Ok(LbfgsResult { x, value: fx, iterations: iter, stop: StopReason::GradientTol, trace });
        }

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / norm_inf(&g).max(1.0),
        };
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // not a descent direction; restart from steepest descent
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }

        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + opts.armijo_c * step * slope {
                if g_new.iter().any(|v| !v.is_finite()) {
                    return Err(NumericError::NonFinite(iter + 1));
                }
                accepted = Some(f_new);
                break;
            }
            step *= opts.shrink;
        }
        let Some(f_new) = accepted else {
            return Ok(LbfgsResult { x, value: fx, iterations: iter, stop: StopReason::LineSearch, trace });
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        trace.push(fx);
    }
    let stop = if norm_inf(&g) <= opts.tol { StopReason::GradientTol } else { StopReason::MaxIters };
    Ok(LbfgsResult { x, value: fx, iterations: opts.max_iters, stop, trace })
}
