//! Levenberg-Marquardt for scalar curve models `y = f(p; x)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop when an accepted step improves SSE by less than this fraction.
    pub rel_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: 500,
            rel_tolerance: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// SSE at the start and after every iteration (accepted or not).
    pub trace: Vec<f64>,
}

/// Model callback: returns `f(p; x)` and writes `df/dp` into `grad`.
pub trait CurveModel {
    fn n_params(&self) -> usize;
    fn eval(&self, p: &[f64], x: f64, grad: &mut [f64]) -> f64;
}

pub fn sse<M: CurveModel>(model: &M, p: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let mut g = vec![0.0; model.n_params()];
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - model.eval(p, xi, &mut g)).powi(2))
        .sum()
}

/// Minimizes the sum of squared residuals from `p0`.
///
/// Steps are accepted only when they lower the SSE, so the best-so-far SSE
/// never increases. Exhausting `max_iterations` returns the best point with
/// `converged = false`.
pub fn minimize<M: CurveModel>(
    model: &M,
    x: &[f64],
    y: &[f64],
    p0: &[f64],
    cfg: &LmConfig,
) -> Result<LmOutcome> {
    let np = model.n_params();
    if p0.len() != np {
        return Err(Error::ShapeMismatch {
            expected: np,
            actual: p0.len(),
        });
    }
    let mut p = p0.to_vec();
    let mut cur = sse(model, &p, x, y);
    if !cur.is_finite() {
        return Err(Error::invalid("initial parameters give a non-finite residual"));
    }
    let mut lambda = cfg.initial_lambda;
    let mut trace = vec![cur];
    let mut grad = vec![0.0; np];
    let mut converged = cur == 0.0;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let mut jtj = DMatrix::<f64>::zeros(np, np);
        let mut jtr = DVector::<f64>::zeros(np);
        for (&xi, &yi) in x.iter().zip(y) {
            let r = yi - model.eval(&p, xi, &mut grad);
            for a in 0..np {
                jtr[a] += grad[a] * r;
                for b in a..np {
                    jtj[(a, b)] += grad[a] * grad[b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }

        let mut damped = jtj.clone();
        for a in 0..np {
            damped[(a, a)] += lambda * jtj[(a, a)].max(1e-12);
        }
        let step = damped
            .clone()
            .cholesky()
            .map(|c| c.solve(&jtr))
            .or_else(|| damped.lu().solve(&jtr));

        let accepted = step.and_then(|delta| {
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            let s = sse(model, &trial, x, y);
            (s.is_finite() && s < cur).then_some((trial, s))
        });
        match accepted {
            Some((trial, s)) => {
                let improvement = (cur - s) / cur;
                p = trial;
                cur = s;
                lambda = (lambda / 10.0).max(1e-15);
                if improvement < cfg.rel_tolerance || cur == 0.0 {
                    converged = true;
                }
            }
            None => {
                lambda *= 10.0;
                // No descent direction left at any damping: stationary point.
                if lambda > 1e16 {
                    converged = true;
                }
            }
        }
        trace.push(cur);
    }

    Ok(LmOutcome {
        params: p,
        sse: cur,
        iterations,
        converged,
        trace,
    })
}
