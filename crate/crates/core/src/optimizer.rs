// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

//! Robust cost functional and its minimization.
//!
//! The cost of a sequence is the ensemble mean of gate error plus
//! sign-corrected perfect-entangler distance. It is minimized with L-BFGS on
//! forward-difference gradients, starting from a guess tiled out of the
//! solution for the greatest proper divisor of the length.

mod functional;
mod lbfgs;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use functional::{central_difference, functional_j, numerical_gradient, EnsembleMetrics, SequenceProblem};
pub use lbfgs::{lbfgs_minimize, LbfgsOutcome, Termination};

use crate::error::{Error, Result};
use crate::metrics::Projection;
use crate::noise::{sample_ensemble, GaussianSource, NoiseConfig, RNG_ALGORITHM};
use crate::sequence::{InteractionKind, SequenceParams};

/// Solved sequences keyed by length.
pub type SolutionArchive = BTreeMap<usize, SequenceParams>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Number of stored curvature pairs.
    pub history_size: usize,
    /// Stop when the sup-norm of the gradient drops to this value.
    pub grad_tol: f64,
    /// Stop when `(f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1)` drops to this value.
    pub rel_f_tol: f64,
    pub max_iterations: usize,
    /// Relative forward-difference step, `h_i = scale * max(1, |x_i|)`.
    pub fd_step_scale: f64,
    /// Trial points per line search.
    pub max_line_search: usize,
    /// Extra searches from randomly perturbed guesses; the lowest cost wins.
    pub restarts: usize,
    /// Standard deviation (radians) of the restart perturbations.
    pub restart_scale: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            history_size: 10,
            grad_tol: 1e-5,
            rel_f_tol: 2.2e-9,
            max_iterations: 15_000,
            fd_step_scale: f64::EPSILON.sqrt(),
            max_line_search: 20,
            restarts: 0,
            restart_scale: 0.3,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("rel_f_tol", self.rel_f_tol),
            ("fd_step_scale", self.fd_step_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.history_size == 0 || self.max_iterations == 0 || self.max_line_search == 0 {
            return Err(Error::domain("history_size, max_iterations and max_line_search must be >= 1"));
        }
        Ok(())
    }
}

/// Outcome of one length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub params: SequenceParams,
    pub j_value: f64,
    pub initial_j: f64,
    pub in_sample_gate_error: f64,
    pub in_sample_pe_error: f64,
    pub out_of_sample_gate_error: f64,
    pub out_of_sample_pe_error: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub seed: u64,
    pub out_of_sample_seed: u64,
    pub out_of_sample_m: usize,
    pub rng_algorithm: String,
}

/// Largest divisor of `n` smaller than `n` (1 for primes, none for 1).
pub fn greatest_proper_divisor(n: usize) -> Option<usize> {
    if n < 2 {
        return None;
    }
    (2..)
        .take_while(|p| p * p <= n)
        .find(|p| n.is_multiple_of(*p))
        .map(|p| n / p)
        .or(Some(1))
}

/// Initial guess for a length-`n` search.
///
/// Composite lengths tile the archived solution of their greatest proper
/// divisor; primes and `n = 1` start from identity rotations.
pub fn bootstrap_guess(n: usize, interaction: InteractionKind, archive: &SolutionArchive) -> Result<SequenceParams> {
    match greatest_proper_divisor(n) {
        Some(d) if d > 1 => {
            let base = archive.get(&d).ok_or(Error::MissingDependency { length: n, divisor: d })?;
            if base.n_steps() != d || base.interaction() != interaction {
                return Err(Error::domain(format!(
                    "archived solution for length {d} does not match ({} steps, {})",
                    base.n_steps(),
                    base.interaction()
                )));
            }
            let steps = base.steps().iter().copied().cycle().take(n).collect();
            SequenceParams::new(interaction, steps)
        }
        _ => SequenceParams::zeros(interaction, n.max(1)).and_then(|s| {
            if n == 0 {
                Err(Error::domain("sequence length must be >= 1"))
            } else {
                Ok(s)
            }
        }),
    }
}

/// Solves one length end to end.
///
/// * trains on the ensemble sampled from `config`,
/// * starts from [`bootstrap_guess`],
/// * reports in-sample metrics on the training ensemble and out-of-sample
///   metrics on `eval_m` fresh realizations seeded with `config.seed + 1`.
pub fn optimize_sequence(
    n: usize,
    interaction: InteractionKind,
    config: &NoiseConfig,
    opts: &OptimizerOptions,
    archive: &SolutionArchive,
    eval_m: usize,
) -> Result<OptimizationResult> {
    opts.validate()?;
    config.validate()?;
    if eval_m == 0 {
        return Err(Error::domain("out-of-sample ensemble size must be >= 1"));
    }
    let guess = bootstrap_guess(n, interaction, archive)?;
    let training = sample_ensemble(config, n)?;
    let problem = SequenceProblem::new(interaction, &training)?;

    let x0 = guess.to_flat();
    let initial_j = problem.functional_flat(&x0)?;
    let mut best = lbfgs_minimize(|x| problem.value_and_gradient(x, opts.fd_step_scale), &x0, opts)?;
    if opts.restarts > 0 {
        let mut src = GaussianSource::new(config.seed ^ 0x5eed_0f7e_57a7);
        for _ in 0..opts.restarts {
            let start: Vec<f64> = x0.iter().map(|x| x + src.normal(opts.restart_scale)).collect();
            let trial = lbfgs_minimize(|x| problem.value_and_gradient(x, opts.fd_step_scale), &start, opts)?;
            if trial.f < best.f {
                best = LbfgsOutcome {
                    iterations: best.iterations + trial.iterations,
                    evaluations: best.evaluations + trial.evaluations,
                    ..trial
                };
            } else {
                best.iterations += trial.iterations;
                best.evaluations += trial.evaluations;
            }
        }
    }

    let params = SequenceParams::from_flat(interaction, &best.x)?;
    let in_sample = problem.metrics(&params, Projection::Raw)?;

    let oos_config = NoiseConfig {
        seed: config.seed.wrapping_add(1),
        m_realizations: eval_m,
        ..config.clone()
    };
    let held_out = sample_ensemble(&oos_config, n)?;
    let out_of_sample = SequenceProblem::new(interaction, &held_out)?.metrics(&params, Projection::Raw)?;

    Ok(OptimizationResult {
        params,
        j_value: in_sample.j_value,
        initial_j,
        in_sample_gate_error: in_sample.gate_error,
        in_sample_pe_error: in_sample.pe_error,
        out_of_sample_gate_error: out_of_sample.gate_error,
        out_of_sample_pe_error: out_of_sample.pe_error,
        iterations: best.iterations,
        evaluations: best.evaluations,
        converged: best.converged,
        termination: best.termination,
        seed: config.seed,
        out_of_sample_seed: oos_config.seed,
        out_of_sample_m: eval_m,
        rng_algorithm: RNG_ALGORITHM.to_string(),
    })
}
