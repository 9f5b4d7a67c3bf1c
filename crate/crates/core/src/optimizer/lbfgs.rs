// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::OptimizerOptions;
use crate::error::{Error, Result};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    RelativeReduction,
    MaxIterations,
    LineSearchFailed,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(self, Termination::GradientTolerance | Termination::RelativeReduction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    /// Calls of the objective, the initial point included.
    pub evaluations: usize,
    pub converged: bool,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect()
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

struct History {
    cap: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > f64::EPSILON * dot(&y, &y)) {
            return;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// `-H g` by the two-loop recursion.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

struct Objective<F> {
    fg: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Objective<F> {
    fn eval(&mut self, x: Vec<f64>) -> Result<Point> {
        self.evaluations += 1;
        let (f, g) = (self.fg)(&x)?;
        if g.len() != x.len() {
            return Err(Error::numeric(format!("gradient has {} entries for {} unknowns", g.len(), x.len())));
        }
        Ok(Point { x, f, g })
    }
}

/// Minimizer of a safeguarded cubic through `(a, fa, da)` and `(b, fb, db)`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Strong-Wolfe search along `d` from `p0`.
///
/// Returns the accepted point, or the best sufficient-decrease point seen if
/// the curvature condition could not be met, or `None`.
fn line_search<F>(obj: &mut Objective<F>, p0: &Point, d: &[f64], alpha0: f64, max_evals: usize) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let dphi0 = dot(&p0.g, d);
    let armijo = |alpha: f64, f: f64| f <= p0.f + C1 * alpha * dphi0;
    let mut evals = 0;
    let mut fallback: Option<(f64, Point)> = None;
    let note = |alpha: f64, p: Point, fallback: &mut Option<(f64, Point)>| -> Point {
        if armijo(alpha, p.f) && fallback.as_ref().is_none_or(|(_, q)| p.f < q.f) {
            *fallback = Some((alpha, Point { x: p.x.clone(), f: p.f, g: p.g.clone() }));
        }
        p
    };

    // Bracketing phase.
    let (mut lo, mut hi);
    let mut prev = (0.0, p0.f, dphi0);
    let mut alpha = alpha0;
    loop {
        if evals >= max_evals {
            return Ok(fallback.map(|(_, p)| p));
        }
        evals += 1;
        let p = obj.eval(axpy(&p0.x, alpha, d))?;
        let dphi = dot(&p.g, d);
        let (f, finite) = (p.f, p.f.is_finite() && dphi.is_finite());
        let p = note(alpha, p, &mut fallback);
        if !finite {
            // Shrink into the region where the objective is defined.
            hi = (alpha, f64::INFINITY, f64::NAN);
            lo = prev;
            break;
        }
        if !armijo(alpha, f) || (evals > 1 && f >= prev.1) {
            lo = prev;
            hi = (alpha, f, dphi);
            break;
        }
        if dphi.abs() <= -C2 * dphi0 {
            return Ok(Some(p));
        }
        if dphi >= 0.0 {
            lo = (alpha, f, dphi);
            hi = prev;
            break;
        }
        prev = (alpha, f, dphi);
        alpha *= 2.0;
    }

    // Zoom phase: `lo` satisfies sufficient decrease with the lowest value.
    while evals < max_evals {
        let (a, b) = (lo.0, hi.0);
        let width = (b - a).abs();
        if width <= f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        let (left, right) = (a.min(b), a.max(b));
        let guard = 0.1 * width;
        let trial = if hi.1.is_finite() && hi.2.is_finite() {
            cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2)
        } else {
            None
        };
        let alpha = match trial {
            Some(t) if t > left + guard && t < right - guard => t,
            _ => 0.5 * (a + b),
        };
        evals += 1;
        let p = obj.eval(axpy(&p0.x, alpha, d))?;
        let dphi = dot(&p.g, d);
        let (f, finite) = (p.f, p.f.is_finite() && dphi.is_finite());
        let p = note(alpha, p, &mut fallback);
        if !finite || !armijo(alpha, f) || f >= lo.1 {
            hi = (alpha, if finite { f } else { f64::INFINITY }, if finite { dphi } else { f64::NAN });
            continue;
        }
        if dphi.abs() <= -C2 * dphi0 {
            return Ok(Some(p));
        }
        if dphi * (hi.0 - lo.0) >= 0.0 {
            hi = lo;
        }
        lo = (alpha, f, dphi);
    }
    Ok(fallback.map(|(_, p)| p))
}

/// Unconstrained limited-memory BFGS.
///
/// `fg` returns the objective and its gradient. Stops when the gradient
/// sup-norm reaches `grad_tol`, when the relative reduction
/// `(f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1)` reaches `rel_f_tol`, or after
/// `max_iterations` accepted steps. A failed line search first retries along
/// steepest descent with the curvature memory cleared, then stops with the
/// best point found.
pub fn lbfgs_minimize<F>(fg: F, x0: &[f64], opts: &OptimizerOptions) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    opts.validate()?;
    if x0.is_empty() {
        return Err(Error::domain("lbfgs_minimize needs at least one unknown"));
    }
    let mut obj = Objective { fg, evaluations: 0 };
    let mut current = obj.eval(x0.to_vec())?;
    if !current.f.is_finite() || current.g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("objective or gradient is not finite at the starting point"));
    }
    let mut history = History {
        cap: opts.history_size,
        pairs: VecDeque::new(),
    };
    let mut iterations = 0;
    let finish = |p: Point, iterations: usize, evaluations: usize, termination: Termination| LbfgsOutcome {
        grad_inf_norm: inf_norm(&p.g),
        x: p.x,
        f: p.f,
        iterations,
        evaluations,
        converged: termination.is_converged(),
        termination,
    };

    loop {
        if inf_norm(&current.g) <= opts.grad_tol {
            return Ok(finish(current, iterations, obj.evaluations, Termination::GradientTolerance));
        }
        if iterations >= opts.max_iterations {
            return Ok(finish(current, iterations, obj.evaluations, Termination::MaxIterations));
        }

        let mut next = None;
        for attempt in 0..2 {
            let fresh = history.pairs.is_empty();
            let mut d = history.direction(&current.g);
            if !(dot(&d, &current.g) < 0.0) {
                history.pairs.clear();
                d = history.direction(&current.g);
            }
            let alpha0 = if history.pairs.is_empty() {
                (1.0 / dot(&current.g, &current.g).sqrt()).min(1.0)
            } else {
                1.0
            };
            if let Some(p) = line_search(&mut obj, &current, &d, alpha0, opts.max_line_search)? {
                next = Some(p);
                break;
            }
            if fresh || attempt == 1 {
                break;
            }
            history.pairs.clear();
        }
        let Some(next) = next else {
            return Ok(finish(current, iterations, obj.evaluations, Termination::LineSearchFailed));
        };

        iterations += 1;
        let reduction = (current.f - next.f) / current.f.abs().max(next.f.abs()).max(1.0);
        let s: Vec<f64> = next.x.iter().zip(&current.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&current.g).map(|(a, b)| a - b).collect();
        history.push(s, y);
        current = next;
        if reduction <= opts.rel_f_tol {
            return Ok(finish(current, iterations, obj.evaluations, Termination::RelativeReduction));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    fn tight() -> OptimizerOptions {
        OptimizerOptions {
            grad_tol: 1e-10,
            rel_f_tol: 1e-16,
            ..OptimizerOptions::default()
        }
    }

    #[test]
    fn convex_quadratic() {
        let out = lbfgs_minimize(
            |x| Ok((x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect())),
            &[3.0, -4.0],
            &OptimizerOptions::default(),
        )
        .unwrap();
        assert!(out.f <= 1e-10, "{out:?}");
        assert!(out.converged);
    }

    /// Fixed-step gradient descent, run long enough to serve as a reference.
    fn gradient_descent_oracle() -> Vec<f64> {
        let mut x = vec![-1.2, 1.0];
        for _ in 0..2_000_000 {
            let (_, g) = rosenbrock(&x);
            x[0] -= 1e-3 * g[0];
            x[1] -= 1e-3 * g[1];
        }
        x
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let oracle = gradient_descent_oracle();
        let out = lbfgs_minimize(|x| Ok(rosenbrock(x)), &[-1.2, 1.0], &tight()).unwrap();
        for (a, b) in out.x.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-5, "{:?} vs oracle {oracle:?}", out.x);
            assert!((a - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rosenbrock_with_default_tolerances() {
        let out = lbfgs_minimize(|x| Ok(rosenbrock(x)), &[-1.2, 1.0], &OptimizerOptions::default()).unwrap();
        assert!(out.converged, "{out:?}");
        assert!((out.x[0] - 1.0).abs() < 1e-3 && (out.x[1] - 1.0).abs() < 1e-3, "{out:?}");
    }

    #[test]
    fn zero_gradient_start_is_returned() {
        let out = lbfgs_minimize(|x| Ok((5.0, vec![0.0; x.len()])), &[0.3, 0.7], &OptimizerOptions::default()).unwrap();
        assert_eq!(out.x, vec![0.3, 0.7]);
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn accepted_iterates_never_increase() {
        // Runs are deterministic, so capping the iteration count at k yields
        // the k-th accepted iterate of the uncapped run.
        let mut accepted = vec![rosenbrock(&[-1.2, 1.0]).0];
        for k in 1..=40 {
            let opts = OptimizerOptions {
                max_iterations: k,
                ..tight()
            };
            accepted.push(lbfgs_minimize(|x| Ok(rosenbrock(x)), &[-1.2, 1.0], &opts).unwrap().f);
        }
        assert!(accepted.windows(2).all(|w| w[1] <= w[0]), "{accepted:?}");
    }

    #[test]
    fn line_search_failure_reports_best_point() {
        // The reported gradient points uphill, so no step can decrease f.
        let out = lbfgs_minimize(
            |x| Ok((x[0] * x[0], vec![-2.0 * x[0]])),
            &[1.0],
            &OptimizerOptions::default(),
        )
        .unwrap();
        assert!(!out.converged);
        assert_eq!(out.termination, Termination::LineSearchFailed);
        assert_eq!(out.x, vec![1.0]);
    }

    #[test]
    fn max_iterations_is_honored() {
        let opts = OptimizerOptions {
            max_iterations: 3,
            ..tight()
        };
        let out = lbfgs_minimize(|x| Ok(rosenbrock(x)), &[-1.2, 1.0], &opts).unwrap();
        assert_eq!(out.iterations, 3);
        assert_eq!(out.termination, Termination::MaxIterations);
        assert!(!out.converged);
    }
}
