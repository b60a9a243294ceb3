//! First-order descent with Armijo backtracking.
//!
//! Directions come from a limited-memory BFGS two-loop recursion
//! (`memory = 0` gives plain steepest descent). A direction that is not a
//! descent direction, or one for which backtracking fails, is replaced by
//! the negative gradient with the memory cleared.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Descent settings shared by the cell-problem and `F_eps` solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop once the scaled gradient sup-norm drops below this.
    pub gradient_tolerance: f64,
    /// Also stop (converged) after ten consecutive accepted steps whose
    /// relative energy decrease is at most this.
    pub value_tolerance: f64,
    /// Backtracking step shrink factor.
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    /// Number of starts (zero start first, then structured and random ones).
    pub restarts: usize,
    pub seed: u64,
    /// L-BFGS memory; 0 means steepest descent.
    pub memory: usize,
    pub record_history: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            gradient_tolerance: 1e-9,
            value_tolerance: 1e-15,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            restarts: 1,
            seed: 0,
            memory: 8,
            record_history: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(invalid("gradient_tolerance must be positive"));
        }
        if !(self.value_tolerance >= 0.0) {
            return Err(invalid("value_tolerance must be nonnegative"));
        }
        if self.restarts < 1 {
            return Err(invalid("restarts must be at least 1"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(invalid("shrink must lie in (0, 1)"));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(invalid("sufficient_decrease must lie in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be positive"));
        }
        Ok(())
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }
}

/// A smooth objective on `R^n`.
pub trait Objective {
    /// Returns the value and writes the gradient into `grad`.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Factor turning the raw gradient sup-norm into the quantity compared
    /// against `gradient_tolerance`.
    fn gradient_scale(&self) -> f64 {
        1.0
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Accepted iterate values, starting with the initial one (if recorded).
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes `objective` from `x0`.
pub fn minimize(
    objective: &impl Objective,
    x0: Vec<f64>,
    cfg: &OptimizerConfig,
) -> Result<Minimum> {
    cfg.validate()?;
    let n = x0.len();
    let scale = objective.gradient_scale();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = objective.value_and_gradient(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "objective is not finite at the start point ({f})"
        )));
    }
    let mut history = Vec::new();
    if cfg.record_history {
        history.push(f);
    }
    if n == 0 {
        return Ok(Minimum {
            x,
            value: f,
            iterations: 0,
            converged: true,
            gradient_norm: 0.0,
            history,
        });
    }

    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha_buf = vec![0.0; cfg.memory.max(1)];
    let mut converged = false;
    let mut iterations = 0;
    let mut flat_steps = 0;

    while iterations < cfg.max_iterations {
        let gnorm = sup(&g) * scale;
        if gnorm <= cfg.gradient_tolerance {
            converged = true;
            break;
        }

        // two-loop recursion
        d.copy_from_slice(&g);
        for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[k] = a;
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
        }
        let gamma = match mem.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / sup(&g).max(1.0),
        };
        d.iter_mut().for_each(|v| *v *= gamma);
        for (k, (s, y, rho)) in mem.iter().enumerate() {
            let b = rho * dot(y, &d);
            let a = alpha_buf[k];
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        d.iter_mut().for_each(|v| *v = -*v);

        let mut slope = dot(&g, &d);
        let steepest = mem.is_empty();
        if !(slope < 0.0) {
            mem.clear();
            let s = 1.0 / sup(&g).max(1.0);
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -s * gi);
            slope = dot(&g, &d);
        }

        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            x_new
                .iter_mut()
                .zip(&x)
                .zip(&d)
                .for_each(|((xn, xi), di)| *xn = xi + step * di);
            let f_new = objective.value_and_gradient(&x_new, &mut g_new);
            let predicted = cfg.sufficient_decrease * step * slope;
            // below the rounding level of f the Armijo test degenerates to plain decrease
            let noisy = predicted.abs() <= 1e-15 * f.abs();
            if f_new.is_finite() && (f_new <= f + predicted || (noisy && f_new <= f)) {
                accepted = Some(f_new);
                break;
            }
            step *= cfg.shrink;
        }
        let Some(f_new) = accepted else {
            if !steepest {
                mem.clear();
                continue;
            }
            break;
        };
        iterations += 1;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if cfg.memory > 0 && sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if mem.len() == cfg.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }

        if f - f_new <= cfg.value_tolerance * f.abs() {
            flat_steps += 1;
        } else {
            flat_steps = 0;
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        if cfg.record_history {
            history.push(f);
        }
        if flat_steps >= 10 {
            converged = true;
            break;
        }
    }

    let gradient_norm = sup(&g) * scale;
    converged |= gradient_norm <= cfg.gradient_tolerance;
    Ok(Minimum {
        x,
        value: f,
        iterations,
        converged,
        gradient_norm,
        history,
    })
}
