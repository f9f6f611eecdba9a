//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! A projected L-BFGS scheme: variables sitting on a bound with the gradient
//! pushing outward are frozen for the iteration, the two-loop recursion
//! builds a direction over the free variables, and a backtracking Armijo
//! search runs along the projected path `P(x + a d)`. Accepted steps
//! therefore never increase the objective.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsbOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the sup-norm of the projected gradient falls below this.
    pub gradient_tolerance: f64,
    /// Stop when `(f_prev − f) / max(|f_prev|, |f|, 1)` falls below this on
    /// `stall_iterations` consecutive iterations.
    pub objective_tolerance: f64,
    pub stall_iterations: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            objective_tolerance: 1e-9,
            stall_iterations: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    /// The line search could not make progress.
    LineSearchFailed,
    /// The objective was not finite at the starting point.
    NonFiniteStart,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Self::GradientTolerance | Self::ObjectiveTolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective after each accepted iteration, starting with the initial value.
    pub trace: Vec<f64>,
}

impl Minimum {
    pub fn projected_gradient_norm(&self, lower: &[f64], upper: &[f64]) -> f64 {
        projected_gradient_norm(&self.x, &self.gradient, lower, upper)
    }
}

pub fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// `‖x − P(x − g)‖_∞`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((xi, gi), (lo, hi))| (xi - (xi - gi).clamp(*lo, *hi)).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn masked_dot(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(free)
        .filter(|(_, &f)| f)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Minimizes `f` over the box `[lower, upper]` from `x0`.
///
/// `f(x, grad)` must return the objective and write its gradient; a
/// non-finite return marks the point as infeasible for the line search.
pub fn minimize<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], options: &LbfgsbOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    let mut evaluations = 1;
    let mut trace = vec![value];
    if !value.is_finite() {
        return Minimum {
            x,
            value,
            gradient: g,
            iterations: 0,
            evaluations,
            termination: Termination::NonFiniteStart,
            trace,
        };
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(options.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut stalled = 0;

    while iterations < options.max_iterations {
        if projected_gradient_norm(&x, &g, lower, upper) <= options.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }

        // Variables held at a bound by an outward-pointing gradient.
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let at_lower = x[i] <= lower[i] && g[i] > 0.0;
                let at_upper = x[i] >= upper[i] && g[i] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();

        let mut d = two_loop_direction(&g, &pairs, &free);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            pairs.clear();
            d = g
                .iter()
                .zip(&free)
                .map(|(gi, &fr)| if fr { -gi } else { 0.0 })
                .collect();
            slope = dot(&d, &g);
            if !(slope < 0.0) {
                termination = Termination::GradientTolerance;
                break;
            }
        }

        let mut step = if pairs.is_empty() {
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            (1.0 / norm).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = (x[i] + step * d[i]).clamp(lower[i], upper[i]);
            }
            let new_value = f(&x_new, &mut g_new);
            evaluations += 1;
            let decrease: f64 = g
                .iter()
                .zip(x_new.iter().zip(&x))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if new_value.is_finite() && new_value <= value + 1e-4 * decrease {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if pairs.len() == options.memory {
                        pairs.pop_front();
                    }
                    pairs.push_back((s, y, 1.0 / sy));
                }
                let previous = value;
                value = new_value;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                trace.push(value);
                accepted = true;
                iterations += 1;
                let scale = previous.abs().max(value.abs()).max(1.0);
                if (previous - value) / scale <= options.objective_tolerance {
                    stalled += 1;
                    if stalled >= options.stall_iterations.max(1) {
                        termination = Termination::ObjectiveTolerance;
                    }
                } else {
                    stalled = 0;
                }
                break;
            }
            step *= 0.5;
        }

        if !accepted {
            if pairs.is_empty() {
                termination = if projected_gradient_norm(&x, &g, lower, upper) <= options.gradient_tolerance {
                    Termination::GradientTolerance
                } else {
                    Termination::LineSearchFailed
                };
                break;
            }
            // Retry with steepest descent before giving up.
            pairs.clear();
            continue;
        }
        if termination == Termination::ObjectiveTolerance {
            break;
        }
    }

    if termination == Termination::MaxIterations
        && projected_gradient_norm(&x, &g, lower, upper) <= options.gradient_tolerance
    {
        termination = Termination::GradientTolerance;
    }

    Minimum {
        x,
        value,
        gradient: g,
        iterations,
        evaluations,
        termination,
        trace,
    }
}

fn two_loop_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, free: &[bool]) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().zip(free).map(|(gi, &f)| if f { *gi } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * masked_dot(s, &q, free);
        for i in 0..q.len() {
            if free[i] {
                q[i] -= a * y[i];
            }
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let yy = masked_dot(y, y, free);
        let sy = masked_dot(s, y, free);
        if yy > 0.0 && sy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * masked_dot(y, &q, free);
        for i in 0..q.len() {
            if free[i] {
                q[i] += s[i] * (a - b);
            }
        }
    }
    q.iter().map(|v| -v).collect()
}
