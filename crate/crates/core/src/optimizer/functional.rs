// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{kron, Op3, Op9, C64};
use crate::error::{Error, Result};
use crate::metrics::{gate_error, pe_distance, pe_error, project_logical, Projection};
use crate::noise::NoiseEnsemble;
use crate::sequence::{
    drift_step, evolution_operator, local_noise_factors, rotation_factors, target_operator, InteractionKind,
    RotationParams, SequenceParams,
};

/// Ensemble means of the individual figures of merit for one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMetrics {
    /// Mean of gate error plus perfect-entangler distance.
    pub j_value: f64,
    pub gate_error: f64,
    pub pe_distance: f64,
    /// Mean `1 - F_PE`.
    pub pe_error: f64,
}

/// Reference evaluation of the cost functional.
///
/// Every evolution operator is rebuilt with [`evolution_operator`]; use
/// [`SequenceProblem`] inside optimization loops.
pub fn functional_j(seq: &SequenceParams, ensemble: &NoiseEnsemble) -> Result<f64> {
    check_shape(seq.n_steps(), ensemble)?;
    let target = target_operator(seq);
    let mut total = 0.0;
    for (m, r) in ensemble.realizations().iter().enumerate() {
        let u = evolution_operator(seq, r).map_err(|e| e.at_realization(m))?;
        total += cost_term(&u, &target).map_err(|e| e.at_realization(m))?;
    }
    Ok(total / ensemble.len() as f64)
}

fn check_shape(n_steps: usize, ensemble: &NoiseEnsemble) -> Result<()> {
    if n_steps != ensemble.n_steps() {
        return Err(Error::domain(format!(
            "sequence has {n_steps} steps but ensemble was drawn for {}",
            ensemble.n_steps()
        )));
    }
    Ok(())
}

fn cost_term(u: &Op9, target: &Op9) -> Result<f64> {
    Ok(gate_error(u, target) + pe_distance(&project_logical(u))?)
}

/// `(a (x) b) * p` without forming the 9x9 Kronecker product.
fn kron_apply(a: &Op3, b: &Op3, p: &Op9) -> Op9 {
    let mut t = Op9::zeros();
    for c in 0..9 {
        for k in 0..3 {
            for j in 0..3 {
                let mut acc = C64::new(0.0, 0.0);
                for l in 0..3 {
                    acc += b[(j, l)] * p[(3 * k + l, c)];
                }
                t[(3 * k + j, c)] = acc;
            }
        }
    }
    let mut out = Op9::zeros();
    for c in 0..9 {
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..3 {
                    acc += a[(i, k)] * t[(3 * k + j, c)];
                }
                out[(3 * i + j, c)] = acc;
            }
        }
    }
    out
}

/// Forward-difference gradient with steps `h_i = step_scale * max(1, |x_i|)`.
///
/// The divisor is the representable step `(x_i + h_i) - x_i`.
pub fn numerical_gradient<F>(mut f: F, x: &[f64], step_scale: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let f0 = f(x)?;
    if !f0.is_finite() {
        return Err(Error::numeric(format!("objective is {f0} at the base point")));
    }
    let mut xp = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = fd_step(x[i], step_scale);
        xp[i] = x[i] + h;
        let fi = f(&xp)?;
        if !fi.is_finite() {
            return Err(Error::numeric(format!("objective is {fi} after perturbing coordinate {i}")));
        }
        grad.push((fi - f0) / (xp[i] - x[i]));
        xp[i] = x[i];
    }
    Ok(grad)
}

/// Symmetric-difference gradient with a fixed absolute step `h`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut xp = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = f(&xp)?;
        xp[i] = x[i] - h;
        let down = f(&xp)?;
        xp[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::numeric(format!("objective is not finite around coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

fn fd_step(x: f64, scale: f64) -> f64 {
    scale * x.abs().max(1.0)
}

/// Cost functional bound to a frozen ensemble, with the per-realization
/// slices `drift * exp(-i Delta^(m) / N)` precomputed.
pub struct SequenceProblem<'a> {
    interaction: InteractionKind,
    ensemble: &'a NoiseEnsemble,
    drift: Op9,
    slices: Vec<Op9>,
}

/// Per-step data of one sequence evaluated on one slice.
struct Chain {
    /// `prefix[n] = W_n ... W_1`, with `prefix[0] = I`.
    prefix: Vec<Op9>,
    /// `left[n] = W_N ... W_{n+2} * slice`, the factor multiplying step
    /// `n + 1`'s rotation from the left.
    left: Vec<Op9>,
}

impl Chain {
    fn build(slice: &Op9, factors: &[(Op3, Op3)]) -> Chain {
        let n = factors.len();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(Op9::identity());
        for (a, b) in factors {
            let next = slice * kron_apply(a, b, prefix.last().expect("non-empty"));
            prefix.push(next);
        }
        let mut left = vec![Op9::zeros(); n];
        let mut suffix = Op9::identity();
        for k in (0..n).rev() {
            left[k] = suffix * slice;
            let (a, b) = &factors[k];
            suffix = left[k] * kron(a, b);
        }
        Chain { prefix, left }
    }

    fn full(&self) -> &Op9 {
        self.prefix.last().expect("non-empty")
    }

    /// The product with step `k`'s rotation replaced by `a (x) b`.
    fn replaced(&self, k: usize, a: &Op3, b: &Op3) -> Op9 {
        self.left[k] * kron_apply(a, b, &self.prefix[k])
    }
}

impl<'a> SequenceProblem<'a> {
    pub fn new(interaction: InteractionKind, ensemble: &'a NoiseEnsemble) -> Result<Self> {
        let drift = drift_step(ensemble.n_steps(), interaction)?;
        let slices = ensemble.noise_slices().iter().map(|s| drift * s).collect();
        Ok(SequenceProblem {
            interaction,
            ensemble,
            drift,
            slices,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.ensemble.n_steps()
    }

    pub fn n_params(&self) -> usize {
        self.n_steps() * RotationParams::LEN
    }

    pub fn interaction(&self) -> InteractionKind {
        self.interaction
    }

    pub fn ensemble(&self) -> &NoiseEnsemble {
        self.ensemble
    }

    fn parse(&self, x: &[f64]) -> Result<SequenceParams> {
        let seq = SequenceParams::from_flat(self.interaction, x)?;
        check_shape(seq.n_steps(), self.ensemble)?;
        Ok(seq)
    }

    fn noisy_factors(&self, m: usize, k: usize, p: &RotationParams) -> (Op3, Op3) {
        match self.ensemble.realizations()[m].local() {
            Some(local) => local_noise_factors(p, &local.steps[k], local.rule),
            None => rotation_factors(p),
        }
    }

    fn chain(&self, m: usize, steps: &[RotationParams]) -> Chain {
        let factors: Vec<_> = steps
            .iter()
            .enumerate()
            .map(|(k, p)| self.noisy_factors(m, k, p))
            .collect();
        Chain::build(&self.slices[m], &factors)
    }

    fn target_chain(&self, steps: &[RotationParams]) -> Chain {
        let factors: Vec<_> = steps.iter().map(rotation_factors).collect();
        Chain::build(&self.drift, &factors)
    }

    /// Evolution operators of every realization, in index order.
    pub fn evolutions(&self, seq: &SequenceParams) -> Result<Vec<Op9>> {
        check_shape(seq.n_steps(), self.ensemble)?;
        Ok((0..self.ensemble.len())
            .into_par_iter()
            .map(|m| self.chain(m, seq.steps()).full().to_owned())
            .collect())
    }

    pub fn functional(&self, seq: &SequenceParams) -> Result<f64> {
        let target = target_operator(seq);
        let terms: Vec<Result<f64>> = self
            .evolutions(seq)?
            .par_iter()
            .enumerate()
            .map(|(m, u)| cost_term(u, &target).map_err(|e| e.at_realization(m)))
            .collect();
        mean(terms)
    }

    pub fn functional_flat(&self, x: &[f64]) -> Result<f64> {
        self.functional(&self.parse(x)?)
    }

    /// Cost plus its decomposition for reporting.
    pub fn metrics(&self, seq: &SequenceParams, projection: Projection) -> Result<EnsembleMetrics> {
        let target = target_operator(seq);
        let us = self.evolutions(seq)?;
        let rows: Vec<Result<[f64; 3]>> = us
            .par_iter()
            .enumerate()
            .map(|(m, u)| {
                let eval = || -> Result<[f64; 3]> {
                    Ok([
                        gate_error(u, &target),
                        pe_distance(&project_logical(u))?,
                        pe_error(u, projection)?,
                    ])
                };
                eval().map_err(|e| e.at_realization(m))
            })
            .collect();
        let mut sums = [0.0; 3];
        for row in rows {
            for (s, v) in sums.iter_mut().zip(row?) {
                *s += v;
            }
        }
        let count = us.len() as f64;
        let [gate, dist, pe] = sums.map(|s| s / count);
        Ok(EnsembleMetrics {
            j_value: (sums[0] + sums[1]) / count,
            gate_error: gate,
            pe_distance: dist,
            pe_error: pe,
        })
    }

    /// Cost and forward-difference gradient at `x`.
    ///
    /// Agrees with [`numerical_gradient`] applied to
    /// [`SequenceProblem::functional_flat`] up to rounding, but reuses prefix
    /// and suffix products so each perturbed coordinate costs two matrix
    /// products per realization instead of a full rebuild.
    pub fn value_and_gradient(&self, x: &[f64], step_scale: f64) -> Result<(f64, Vec<f64>)> {
        let seq = self.parse(x)?;
        let n = seq.n_steps();
        let steps = seq.steps();

        let mut perturbed = Vec::with_capacity(x.len());
        let mut h_eff = Vec::with_capacity(x.len());
        for (k, p) in steps.iter().enumerate() {
            let base = p.to_array();
            for j in 0..RotationParams::LEN {
                let mut a = base;
                a[j] = base[j] + fd_step(base[j], step_scale);
                h_eff.push(a[j] - base[j]);
                perturbed.push((k, RotationParams::from_array(a)));
            }
        }

        let target_chain = self.target_chain(steps);
        let target = target_chain.full().to_owned();
        let perturbed_targets: Vec<Op9> = perturbed
            .iter()
            .map(|(k, p)| {
                let (a, b) = rotation_factors(p);
                target_chain.replaced(*k, &a, &b)
            })
            .collect();

        let per_realization: Vec<Result<(f64, Vec<f64>)>> = (0..self.ensemble.len())
            .into_par_iter()
            .map(|m| {
                let eval = || -> Result<(f64, Vec<f64>)> {
                    let chain = self.chain(m, steps);
                    let base = cost_term(chain.full(), &target)?;
                    let shifted = perturbed
                        .iter()
                        .zip(&perturbed_targets)
                        .map(|((k, p), o)| {
                            let (a, b) = self.noisy_factors(m, *k, p);
                            cost_term(&chain.replaced(*k, &a, &b), o)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok((base, shifted))
                };
                eval().map_err(|e| e.at_realization(m))
            })
            .collect();

        let count = self.ensemble.len() as f64;
        let mut f0 = 0.0;
        let mut fi = vec![0.0; 6 * n];
        for r in per_realization {
            let (base, shifted) = r?;
            f0 += base;
            for (acc, v) in fi.iter_mut().zip(shifted) {
                *acc += v;
            }
        }
        f0 /= count;
        if !f0.is_finite() {
            return Err(Error::numeric(format!("objective is {f0} at the base point")));
        }
        let mut grad = Vec::with_capacity(fi.len());
        for (i, (sum, h)) in fi.into_iter().zip(h_eff).enumerate() {
            let v = sum / count;
            if !v.is_finite() {
                return Err(Error::numeric(format!("objective is {v} after perturbing coordinate {i}")));
            }
            grad.push((v - f0) / h);
        }
        Ok((f0, grad))
    }
}

fn mean(terms: Vec<Result<f64>>) -> Result<f64> {
    let count = terms.len() as f64;
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total / count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::max_abs_diff;
    use crate::noise::{sample_ensemble, NoiseConfig};

    fn random_flat(n: usize, seed: u64) -> Vec<f64> {
        let mut src = crate::noise::GaussianSource::new(seed);
        (0..6 * n).map(|_| src.uniform_in(-3.0, 3.0)).collect()
    }

    fn local_config(m: usize, seed: u64) -> NoiseConfig {
        NoiseConfig {
            local_enabled: true,
            sigma_local: 0.01,
            m_realizations: m,
            seed,
            ..NoiseConfig::default()
        }
    }

    #[test]
    fn kron_apply_matches_dense_product() {
        let x = random_flat(3, 1);
        let seq = SequenceParams::from_flat(InteractionKind::Zz, &x).unwrap();
        let (a, b) = rotation_factors(&seq.steps()[0]);
        let p = target_operator(&seq);
        assert!(max_abs_diff(&kron_apply(&a, &b, &p), &(kron(&a, &b) * p)) < 1e-14);
    }

    #[test]
    fn cached_evolutions_match_reference() {
        for config in [NoiseConfig::nonlocal(0.065, 5, 3), local_config(5, 4)] {
            let ens = sample_ensemble(&config, 4).unwrap();
            let seq = SequenceParams::from_flat(InteractionKind::Zz, &random_flat(4, 2)).unwrap();
            let problem = SequenceProblem::new(InteractionKind::Zz, &ens).unwrap();
            for (r, u) in ens.realizations().iter().zip(problem.evolutions(&seq).unwrap()) {
                assert!(max_abs_diff(&u, &evolution_operator(&seq, r).unwrap()) < 1e-12);
            }
            let cached = problem.functional(&seq).unwrap();
            let reference = functional_j(&seq, &ens).unwrap();
            assert!((cached - reference).abs() < 1e-12, "{cached} vs {reference}");
        }
    }

    #[test]
    fn structured_gradient_matches_generic_forward_difference() {
        for config in [NoiseConfig::nonlocal(0.065, 4, 5), local_config(4, 6)] {
            let ens = sample_ensemble(&config, 3).unwrap();
            let problem = SequenceProblem::new(InteractionKind::XxPlusYy, &ens).unwrap();
            let x = random_flat(3, 7);
            let scale = f64::EPSILON.sqrt();
            let (f0, g) = problem.value_and_gradient(&x, scale).unwrap();
            let generic = numerical_gradient(|y| problem.functional_flat(y), &x, scale).unwrap();
            assert!((f0 - problem.functional_flat(&x).unwrap()).abs() < 1e-13);
            for (a, b) in g.iter().zip(&generic) {
                // Both quotients divide an O(1e-15) rounding difference by h ~ 1e-8.
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_noise_examples() {
        let ens = sample_ensemble(&NoiseConfig::nonlocal(0.0, 3, 0), 1).unwrap();
        let zeros = SequenceParams::zeros(InteractionKind::Zz, 1).unwrap();
        let j = functional_j(&zeros, &ens).unwrap();
        assert!((j - 2.0).abs() < 1e-12, "{j}");
    }

    #[test]
    fn baseline_cost_is_gate_error_plus_identity_distance() {
        let ens = sample_ensemble(&NoiseConfig::nonlocal(0.065, 200, 11), 4).unwrap();
        let zeros = SequenceParams::zeros(InteractionKind::Zz, 4).unwrap();
        let m = SequenceProblem::new(InteractionKind::Zz, &ens)
            .unwrap()
            .metrics(&zeros, Projection::Raw)
            .unwrap();
        assert!((m.j_value - m.gate_error - m.pe_distance).abs() < 1e-12);
        assert!(m.gate_error > 0.07 && m.gate_error < 0.13, "{m:?}");
        assert!(m.pe_distance > 1.0 && m.pe_distance < 2.5, "{m:?}");
    }

    #[test]
    fn numerical_gradient_examples() {
        let g = numerical_gradient(|_| Ok(3.5), &[1.0, -2.0, 0.0], 1e-8).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let g = numerical_gradient(|x| Ok(x.iter().map(|v| v * v).sum()), &[1.0, 2.0], f64::EPSILON.sqrt()).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-5 && (g[1] - 4.0).abs() < 1e-5, "{g:?}");
        let err = numerical_gradient(|x| Ok(if x[1] > 0.5 { f64::NAN } else { 0.0 }), &[0.0, 0.5], 1e-3).unwrap_err();
        assert!(matches!(&err, Error::Numeric(msg) if msg.contains("coordinate 1")), "{err}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let ens = sample_ensemble(&NoiseConfig::nonlocal(0.065, 2, 0), 3).unwrap();
        let seq = SequenceParams::zeros(InteractionKind::Zz, 2).unwrap();
        assert!(functional_j(&seq, &ens).is_err());
        let problem = SequenceProblem::new(InteractionKind::Zz, &ens).unwrap();
        assert!(problem.value_and_gradient(&[0.0; 12], 1e-8).is_err());
    }
}
