//! Unconstrained limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub max_iterations: usize,
    /// Stop once `‖g‖∞ / max(1, |f|)` falls below this.
    pub gradient_tolerance: f64,
    /// Number of stored correction pairs.
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Objective after each accepted iterate, starting with the initial value.
    pub history: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

struct Correction {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn relative_gradient(g: &[f64], f: f64) -> f64 {
    inf_norm(g) / f.abs().max(1.0)
}

/// Two-loop recursion: returns `-H·g` for the implicit inverse Hessian `H`.
fn search_direction(g: &[f64], history: &VecDeque<Correction>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for c in history.iter().rev() {
        let a = c.rho * dot(&c.s, &q);
        for (qi, yi) in q.iter_mut().zip(&c.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (c, a) in history.iter().zip(alphas.iter().rev()) {
        let b = c.rho * dot(&c.y, &q);
        for (qi, si) in q.iter_mut().zip(&c.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f`, where `value_and_gradient(x, grad)` returns `f(x)` and
/// writes `∇f(x)` into `grad`.
///
/// Trial points with non-finite values are treated as failed line-search
/// steps; a non-finite value at the initial point is an error.
pub fn lbfgs_minimize<F>(
    mut value_and_gradient: F,
    initial: Vec<f64>,
    options: &LbfgsOptions,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = initial.len();
    let mut x = initial;
    let mut g = vec![0.0; n];
    let mut f = value_and_gradient(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }

    let mut history: VecDeque<Correction> = VecDeque::with_capacity(options.memory);
    let mut values = vec![f];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;

    let termination = loop {
        if relative_gradient(&g, f) <= options.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= options.max_iterations {
            break Termination::MaxIterations;
        }

        let mut d = search_direction(&g, &history);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 || !slope.is_finite() {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut step = if history.is_empty() {
            1.0f64.min(1.0 / inf_norm(&g))
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for ((xn, xi), di) in x_new.iter_mut().zip(&x).zip(&d) {
                *xn = xi + step * di;
            }
            let f_trial = value_and_gradient(&x_new, &mut g_new);
            let finite = f_trial.is_finite() && g_new.iter().all(|v| v.is_finite());
            if finite && f_trial <= f + ARMIJO_C1 * step * slope {
                accepted = Some(f_trial);
                break;
            }
            // safeguarded quadratic interpolation on the step length
            let next = if finite {
                let denom = 2.0 * (f_trial - f - slope * step);
                if denom > 0.0 {
                    (-slope * step * step / denom).clamp(0.1 * step, 0.5 * step)
                } else {
                    0.5 * step
                }
            } else {
                0.25 * step
            };
            step = next;
        }
        let Some(f_next) = accepted else {
            break Termination::LineSearchFailed;
        };
        if x_new == x {
            break Termination::LineSearchFailed;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == options.memory.max(1) {
                history.pop_front();
            }
            history.push_back(Correction { s, y, rho: 1.0 / sy });
        }

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_next;
        values.push(f);
        iterations += 1;
    };

    Ok(LbfgsOutcome {
        x,
        value: f,
        iterations,
        converged: termination == Termination::GradientTolerance,
        termination,
        history: values,
    })
}
