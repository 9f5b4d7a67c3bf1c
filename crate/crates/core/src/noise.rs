// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

//! Monte-Carlo noise model.
//!
//! A realization freezes one draw of the 80 nonlocal coefficients
//! `delta_{i,j}` (every pair of Gell-Mann indices except the global phase
//! `(0, 0)`) and, optionally, the local control-noise coefficients of every
//! step. An ensemble of `M` realizations defines the averaged cost.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{gell_mann_pair, GellMannIndex, Op9, C64};
use crate::error::{Error, Result};
use crate::sequence::{local_noise_factors, noise_step, rotation_factors, RotationParams};

/// Number of nonlocal error channels.
pub const NONLOCAL_CHANNELS: usize = 80;
/// Channels with both indices in `{0, 1, 2, 3}`, identity excluded.
pub const LOGICAL_CHANNELS: usize = 15;
/// All remaining channels.
pub const LEAKAGE_CHANNELS: usize = 65;

/// Identifier of the generator behind every sampled number.
pub const RNG_ALGORITHM: &str = "chacha20/box-muller";

/// Position of `delta_{i,j}` in the nonlocal coefficient vector (row-major,
/// `(0, 0)` omitted).
pub fn channel_index(i: usize, j: usize) -> Option<usize> {
    if i > 8 || j > 8 || (i == 0 && j == 0) {
        None
    } else {
        Some(9 * i + j - 1)
    }
}

/// Inverse of [`channel_index`].
pub fn channel_pair(index: usize) -> Option<(usize, usize)> {
    (index < NONLOCAL_CHANNELS).then(|| ((index + 1) / 9, (index + 1) % 9))
}

/// Whether `lambda_i (x) lambda_j` acts purely inside the logical subspace.
pub fn is_logical_channel(i: usize, j: usize) -> bool {
    i <= 3 && j <= 3 && !(i == 0 && j == 0)
}

/// Which angles enter the magnitudes that scale local leakage noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeRule {
    /// `m = sqrt(alpha^2 + beta^2 + gamma^2)`.
    #[default]
    AllAngles,
    /// `m = sqrt(alpha^2 + beta^2)`, for software-implemented Z rotations.
    ExcludeGamma,
}

impl MagnitudeRule {
    /// `(m1, m2)` of the unperturbed angles.
    pub fn magnitudes(self, p: &RotationParams) -> (f64, f64) {
        let (g1, g2) = match self {
            MagnitudeRule::AllAngles => (p.gamma1, p.gamma2),
            MagnitudeRule::ExcludeGamma => (0.0, 0.0),
        };
        (
            (p.alpha1 * p.alpha1 + p.beta1 * p.beta1 + g1 * g1).sqrt(),
            (p.alpha2 * p.alpha2 + p.beta2 * p.beta2 + g2 * g2).sqrt(),
        )
    }
}

/// Local noise coefficients of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalNoiseDraw {
    /// Relative angle errors, ordered like [`RotationParams::to_array`].
    pub logical: [f64; 6],
    /// `delta_4 ..= delta_8` for qubit 1.
    pub leakage1: [f64; 5],
    /// `delta'_4 ..= delta'_8` for qubit 2.
    pub leakage2: [f64; 5],
}

impl LocalNoiseDraw {
    fn is_finite(&self) -> bool {
        self.logical
            .iter()
            .chain(&self.leakage1)
            .chain(&self.leakage2)
            .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalNoise {
    pub rule: MagnitudeRule,
    pub steps: Vec<LocalNoiseDraw>,
}

/// One frozen noise draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRealization", into = "RawRealization")]
pub struct NoiseRealization {
    nonlocal: Vec<f64>,
    local: Option<LocalNoise>,
}

#[derive(Serialize, Deserialize)]
struct RawRealization {
    nonlocal: Vec<f64>,
    #[serde(default)]
    local: Option<LocalNoise>,
}

impl TryFrom<RawRealization> for NoiseRealization {
    type Error = Error;

    fn try_from(raw: RawRealization) -> Result<Self> {
        NoiseRealization::new(raw.nonlocal, raw.local)
    }
}

impl From<NoiseRealization> for RawRealization {
    fn from(r: NoiseRealization) -> Self {
        RawRealization {
            nonlocal: r.nonlocal,
            local: r.local,
        }
    }
}

impl NoiseRealization {
    pub fn new(nonlocal: Vec<f64>, local: Option<LocalNoise>) -> Result<Self> {
        if nonlocal.len() != NONLOCAL_CHANNELS {
            return Err(Error::domain(format!(
                "expected {NONLOCAL_CHANNELS} nonlocal coefficients, got {}",
                nonlocal.len()
            )));
        }
        if nonlocal.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("non-finite nonlocal coefficient"));
        }
        if let Some(local) = &local {
            if local.steps.iter().any(|d| !d.is_finite()) {
                return Err(Error::domain("non-finite local coefficient"));
            }
        }
        Ok(NoiseRealization { nonlocal, local })
    }

    pub fn nonlocal(&self) -> &[f64] {
        &self.nonlocal
    }

    pub fn local(&self) -> Option<&LocalNoise> {
        self.local.as_ref()
    }
}

/// Noise strengths and sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the 15 logical nonlocal channels.
    pub sigma_logical: f64,
    /// Standard deviation of the 65 leakage nonlocal channels.
    pub sigma_leakage: f64,
    /// Standard deviation of every local coefficient.
    pub sigma_local: f64,
    pub local_enabled: bool,
    /// Force the relative gamma errors to zero (error-free Z rotations).
    pub virtual_z: bool,
    pub m_realizations: usize,
    pub seed: u64,
    /// Use one relative angle error per step instead of one per angle.
    #[serde(default)]
    pub shared_local_logical: bool,
    #[serde(default)]
    pub magnitude_rule: MagnitudeRule,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_logical: 0.065,
            sigma_leakage: 0.065,
            sigma_local: 0.002,
            local_enabled: false,
            virtual_z: false,
            m_realizations: 100,
            seed: 0,
            shared_local_logical: false,
            magnitude_rule: MagnitudeRule::AllAngles,
        }
    }
}

impl NoiseConfig {
    /// Equal logical and leakage strength `sigma`, no local noise.
    pub fn nonlocal(sigma: f64, m_realizations: usize, seed: u64) -> Self {
        NoiseConfig {
            sigma_logical: sigma,
            sigma_leakage: sigma,
            m_realizations,
            seed,
            ..NoiseConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("sigma_logical", self.sigma_logical),
            ("sigma_leakage", self.sigma_leakage),
            ("sigma_local", self.sigma_local),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {s}")));
            }
        }
        if self.m_realizations == 0 {
            return Err(Error::domain("m_realizations must be >= 1"));
        }
        Ok(())
    }
}

/// Standard normal samples from a seeded ChaCha20 stream (Box-Muller).
pub struct GaussianSource {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        GaussianSource {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    pub fn normal(&mut self, sigma: f64) -> f64 {
        sigma * self.standard_normal()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

fn sample_local_draw(src: &mut GaussianSource, config: &NoiseConfig) -> LocalNoiseDraw {
    let sigma = config.sigma_local;
    let mut draw = LocalNoiseDraw::default();
    if config.shared_local_logical {
        draw.logical = [src.normal(sigma); 6];
    } else {
        for x in draw.logical.iter_mut() {
            *x = src.normal(sigma);
        }
    }
    for x in draw.leakage1.iter_mut().chain(draw.leakage2.iter_mut()) {
        *x = src.normal(sigma);
    }
    if config.virtual_z {
        draw.logical[2] = 0.0;
        draw.logical[5] = 0.0;
    }
    draw
}

fn sample_realization(src: &mut GaussianSource, config: &NoiseConfig, n_steps: usize) -> NoiseRealization {
    let nonlocal = (0..NONLOCAL_CHANNELS)
        .map(|idx| {
            let (i, j) = channel_pair(idx).expect("index in range");
            let sigma = if is_logical_channel(i, j) {
                config.sigma_logical
            } else {
                config.sigma_leakage
            };
            src.normal(sigma)
        })
        .collect();
    let local = config.local_enabled.then(|| LocalNoise {
        rule: config.magnitude_rule,
        steps: (0..n_steps).map(|_| sample_local_draw(src, config)).collect(),
    });
    NoiseRealization { nonlocal, local }
}

/// A frozen set of realizations for sequences of a fixed length, together with
/// the precomputed noise slices `exp(-i Delta^(m) / N)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawEnsemble", into = "RawEnsemble")]
pub struct NoiseEnsemble {
    config: NoiseConfig,
    n_steps: usize,
    realizations: Vec<NoiseRealization>,
    slices: Vec<Op9>,
}

#[derive(Serialize, Deserialize)]
struct RawEnsemble {
    config: NoiseConfig,
    n_steps: usize,
    realizations: Vec<NoiseRealization>,
}

impl TryFrom<RawEnsemble> for NoiseEnsemble {
    type Error = Error;

    fn try_from(raw: RawEnsemble) -> Result<Self> {
        NoiseEnsemble::from_realizations(raw.config, raw.n_steps, raw.realizations)
    }
}

impl From<NoiseEnsemble> for RawEnsemble {
    fn from(e: NoiseEnsemble) -> Self {
        RawEnsemble {
            config: e.config,
            n_steps: e.n_steps,
            realizations: e.realizations,
        }
    }
}

impl NoiseEnsemble {
    /// Wraps explicit realizations; shapes are checked against `n_steps`.
    pub fn from_realizations(
        config: NoiseConfig,
        n_steps: usize,
        realizations: Vec<NoiseRealization>,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::domain("ensemble needs n_steps >= 1"));
        }
        if realizations.is_empty() {
            return Err(Error::domain("ensemble needs at least one realization"));
        }
        for (m, r) in realizations.iter().enumerate() {
            if let Some(local) = r.local() {
                if local.steps.len() != n_steps {
                    return Err(Error::domain(format!(
                        "realization {m}: {} local steps for n_steps = {n_steps}",
                        local.steps.len()
                    )));
                }
            }
        }
        let slices = realizations
            .iter()
            .map(|r| noise_step(&build_delta(r.nonlocal())?, n_steps))
            .collect::<Result<Vec<_>>>()?;
        Ok(NoiseEnsemble {
            config,
            n_steps,
            realizations,
            slices,
        })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn realizations(&self) -> &[NoiseRealization] {
        &self.realizations
    }

    /// `exp(-i Delta^(m) / N)` for every realization, in order.
    pub fn noise_slices(&self) -> &[Op9] {
        &self.slices
    }
}

/// Draws `config.m_realizations` realizations for length-`n_steps` sequences.
///
/// The stream is consumed realization by realization: the 80 nonlocal
/// coefficients first, then (when enabled) the local coefficients step by
/// step. Identical inputs give bit-identical ensembles.
pub fn sample_ensemble(config: &NoiseConfig, n_steps: usize) -> Result<NoiseEnsemble> {
    config.validate()?;
    let mut src = GaussianSource::new(config.seed);
    let realizations = (0..config.m_realizations)
        .map(|_| sample_realization(&mut src, config, n_steps))
        .collect();
    NoiseEnsemble::from_realizations(config.clone(), n_steps, realizations)
}

/// `Delta = sum_{(i,j) != (0,0)} delta_{i,j} lambda_i (x) lambda_j`.
pub fn build_delta(nonlocal: &[f64]) -> Result<Op9> {
    if nonlocal.len() != NONLOCAL_CHANNELS {
        return Err(Error::domain(format!(
            "expected {NONLOCAL_CHANNELS} nonlocal coefficients, got {}",
            nonlocal.len()
        )));
    }
    let mut delta = Op9::zeros();
    for (idx, &coeff) in nonlocal.iter().enumerate() {
        if coeff == 0.0 {
            continue;
        }
        let (i, j) = channel_pair(idx).expect("index in range");
        let pair = gell_mann_pair(
            GellMannIndex::new(i).expect("index in range"),
            GellMannIndex::new(j).expect("index in range"),
        );
        delta += pair * C64::new(coeff, 0.0);
    }
    Ok(delta)
}

/// Mean fidelity `|tr(R'^dagger R)|^2 / 81` of a locally perturbed rotation
/// pair against the ideal one.
///
/// `n_angle_sets` rotation pairs with angles uniform in `[-2 pi, 2 pi]` and
/// `n_coeff_sets` local coefficient sets at `sigma_local` are drawn, and the
/// fidelity is averaged over every (angles, coefficients) combination. Both
/// the relative angle errors and the leakage factors are applied.
pub fn local_rotation_fidelity(sigma_local: f64, n_coeff_sets: usize, n_angle_sets: usize, seed: u64) -> Result<f64> {
    if n_coeff_sets == 0 || n_angle_sets == 0 {
        return Err(Error::domain("sample counts must be >= 1"));
    }
    if !(sigma_local.is_finite() && sigma_local >= 0.0) {
        return Err(Error::domain(format!("sigma_local must be finite and >= 0, got {sigma_local}")));
    }
    let mut src = GaussianSource::new(seed);
    let angles: Vec<RotationParams> = (0..n_angle_sets)
        .map(|_| RotationParams::from_array(std::array::from_fn(|_| src.uniform_in(-2.0 * PI, 2.0 * PI))))
        .collect();
    let config = NoiseConfig {
        sigma_local,
        local_enabled: true,
        ..NoiseConfig::default()
    };
    let draws: Vec<LocalNoiseDraw> = (0..n_coeff_sets).map(|_| sample_local_draw(&mut src, &config)).collect();

    // The operators factor as q1 (x) q2, so the 9x9 trace is a product of 3x3 traces.
    let mut total = 0.0;
    for p in &angles {
        let (a, b) = rotation_factors(p);
        let mut partial = 0.0;
        for draw in &draws {
            let (ap, bp) = local_noise_factors(p, draw, MagnitudeRule::AllAngles);
            let tr = (ap.adjoint() * a).trace() * (bp.adjoint() * b).trace();
            partial += tr.norm_sqr() / 81.0;
        }
        total += partial / n_coeff_sets as f64;
    }
    Ok(total / n_angle_sets as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::hermiticity_defect;
    use proptest::prelude::*;

    #[test]
    fn channel_bookkeeping() {
        let logical = (0..NONLOCAL_CHANNELS)
            .filter(|&k| {
                let (i, j) = channel_pair(k).unwrap();
                is_logical_channel(i, j)
            })
            .count();
        assert_eq!(logical, LOGICAL_CHANNELS);
        assert_eq!(NONLOCAL_CHANNELS - logical, LEAKAGE_CHANNELS);
        for k in 0..NONLOCAL_CHANNELS {
            let (i, j) = channel_pair(k).unwrap();
            assert_eq!(channel_index(i, j), Some(k));
        }
        assert_eq!(channel_index(0, 0), None);
        assert_eq!(channel_pair(NONLOCAL_CHANNELS), None);
    }

    #[test]
    fn zero_sigma_gives_zero_coefficients() {
        let e = sample_ensemble(&NoiseConfig::nonlocal(0.0, 5, 1), 3).unwrap();
        for r in e.realizations() {
            assert!(r.nonlocal().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn channel_classes_use_their_own_sigma() {
        // Leakage sigma zero isolates the logical set and vice versa.
        let cfg = NoiseConfig {
            sigma_logical: 0.065,
            sigma_leakage: 0.0,
            ..NoiseConfig::nonlocal(0.0, 100, 2)
        };
        let e = sample_ensemble(&cfg, 1).unwrap();
        for r in e.realizations() {
            let nonzero: Vec<usize> = (0..NONLOCAL_CHANNELS).filter(|&k| r.nonlocal()[k] != 0.0).collect();
            assert_eq!(nonzero.len(), LOGICAL_CHANNELS);
            assert!(nonzero.iter().all(|&k| {
                let (i, j) = channel_pair(k).unwrap();
                is_logical_channel(i, j)
            }));
        }
        let cfg = NoiseConfig {
            sigma_logical: 0.0,
            sigma_leakage: 0.065,
            ..cfg
        };
        let e = sample_ensemble(&cfg, 1).unwrap();
        for r in e.realizations() {
            assert_eq!(r.nonlocal().iter().filter(|&&x| x != 0.0).count(), LEAKAGE_CHANNELS);
        }
    }

    #[test]
    fn virtual_z_zeroes_gamma_errors() {
        let cfg = NoiseConfig {
            local_enabled: true,
            virtual_z: true,
            ..NoiseConfig::nonlocal(0.065, 20, 3)
        };
        let e = sample_ensemble(&cfg, 4).unwrap();
        for r in e.realizations() {
            let local = r.local().unwrap();
            assert_eq!(local.steps.len(), 4);
            for d in &local.steps {
                assert_eq!(d.logical[2], 0.0);
                assert_eq!(d.logical[5], 0.0);
                assert!(d.logical[0] != 0.0 && d.leakage2[4] != 0.0);
            }
        }
    }

    #[test]
    fn shared_logical_draw() {
        let cfg = NoiseConfig {
            local_enabled: true,
            shared_local_logical: true,
            ..NoiseConfig::nonlocal(0.065, 3, 4)
        };
        let e = sample_ensemble(&cfg, 2).unwrap();
        for d in &e.realizations()[0].local().unwrap().steps {
            assert!(d.logical.iter().all(|&x| x == d.logical[0]));
        }
    }

    #[test]
    fn seeded_determinism() {
        let cfg = NoiseConfig {
            local_enabled: true,
            ..NoiseConfig::nonlocal(0.065, 10, 99)
        };
        let a = sample_ensemble(&cfg, 5).unwrap();
        let b = sample_ensemble(&cfg, 5).unwrap();
        assert_eq!(a.realizations(), b.realizations());
        let c = sample_ensemble(&NoiseConfig { seed: 100, ..cfg }, 5).unwrap();
        assert_ne!(a.realizations(), c.realizations());
    }

    #[test]
    fn empirical_channel_spread() {
        let cfg = NoiseConfig {
            sigma_logical: 0.03,
            sigma_leakage: 0.07,
            ..NoiseConfig::nonlocal(0.0, 10_000, 5)
        };
        let e = sample_ensemble(&cfg, 1).unwrap();
        for k in 0..NONLOCAL_CHANNELS {
            let (i, j) = channel_pair(k).unwrap();
            let sigma = if is_logical_channel(i, j) { 0.03 } else { 0.07 };
            let mean_sq = e.realizations().iter().map(|r| r.nonlocal()[k].powi(2)).sum::<f64>() / 10_000.0;
            let std = mean_sq.sqrt();
            assert!((std / sigma - 1.0).abs() < 0.05, "channel ({i},{j}): {std} vs {sigma}");
        }
    }

    #[test]
    fn build_delta_examples() {
        assert_eq!(build_delta(&[0.0; NONLOCAL_CHANNELS]).unwrap(), Op9::zeros());
        let mut c = [0.0; NONLOCAL_CHANNELS];
        c[channel_index(3, 3).unwrap()] = 0.5;
        let d = build_delta(&c).unwrap();
        let want = [0.5, -0.5, 0.0, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        for r in 0..9 {
            for col in 0..9 {
                let w = if r == col { want[r] } else { 0.0 };
                assert_eq!(d[(r, col)], C64::new(w, 0.0));
            }
        }
        assert!(build_delta(&c[1..]).is_err());
    }

    #[test]
    fn ensemble_shape_mismatch_rejected() {
        let cfg = NoiseConfig {
            local_enabled: true,
            ..NoiseConfig::nonlocal(0.065, 2, 6)
        };
        let e = sample_ensemble(&cfg, 3).unwrap();
        let err = NoiseEnsemble::from_realizations(cfg, 4, e.realizations().to_vec());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn ensemble_json_round_trip_recomputes_slices() {
        let cfg = NoiseConfig {
            local_enabled: true,
            ..NoiseConfig::nonlocal(0.065, 3, 7)
        };
        let e = sample_ensemble(&cfg, 2).unwrap();
        let text = serde_json::to_string(&e).unwrap();
        let back: NoiseEnsemble = serde_json::from_str(&text).unwrap();
        assert_eq!(back.realizations(), e.realizations());
        assert_eq!(back.noise_slices(), e.noise_slices());
    }

    #[test]
    fn local_fidelity_zero_sigma_is_exact() {
        assert_eq!(local_rotation_fidelity(0.0, 10, 10, 1).unwrap(), 1.0);
    }

    #[test]
    fn local_fidelity_decreases_with_sigma() {
        let lo = local_rotation_fidelity(0.002, 200, 200, 8).unwrap();
        let hi = local_rotation_fidelity(0.004, 200, 200, 8).unwrap();
        assert!(hi < lo && lo < 1.0, "{hi} {lo}");
    }

    proptest! {
        #[test]
        fn build_delta_is_hermitian_traceless(coeffs in proptest::collection::vec(-1.0f64..1.0, NONLOCAL_CHANNELS)) {
            let d = build_delta(&coeffs).unwrap();
            prop_assert!(hermiticity_defect(&d) < 1e-14);
            prop_assert!(d.trace().norm() < 1e-13);
        }

        #[test]
        fn build_delta_is_linear(
            x in proptest::collection::vec(-1.0f64..1.0, NONLOCAL_CHANNELS),
            y in proptest::collection::vec(-1.0f64..1.0, NONLOCAL_CHANNELS),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = build_delta(&mix).unwrap();
            let rhs = build_delta(&x).unwrap() * C64::new(a, 0.0) + build_delta(&y).unwrap() * C64::new(b, 0.0);
            prop_assert!(crate::algebra::max_abs_diff(&lhs, &rhs) < 1e-12);
        }
    }
}
