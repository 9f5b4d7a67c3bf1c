// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

//! Operators of the interleaved sequence.
//!
//! A length-`N` sequence applies, for `n = 1..=N`, the rotation `R_n`, then the
//! noise slice `exp(-i Delta / N)`, then the drift slice `exp(-i pi G / N)`.
//! Step 1 acts first, so it is the rightmost factor of the product.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algebra::{
    expi_gell_mann, expi_hermitian, gell_mann_pair, kron, su2_block_exp, GellMannIndex, Op3, Op9,
};
use crate::error::{Error, Result};
use crate::noise::{build_delta, LocalNoiseDraw, MagnitudeRule, NoiseRealization};

/// Two-qubit interaction that is sliced into the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InteractionKind {
    /// `lambda_3 (x) lambda_3`, a logical `sigma_z sigma_z` coupling.
    #[serde(rename = "zz")]
    Zz,
    /// `lambda_1 (x) lambda_1 + lambda_2 (x) lambda_2`, a logical `XX + YY` coupling.
    #[serde(rename = "xxyy")]
    XxPlusYy,
}

impl InteractionKind {
    pub fn generator(self) -> Op9 {
        let idx = |i| GellMannIndex::new(i).expect("static index");
        match self {
            InteractionKind::Zz => gell_mann_pair(idx(3), idx(3)),
            InteractionKind::XxPlusYy => {
                gell_mann_pair(idx(1), idx(1)) + gell_mann_pair(idx(2), idx(2))
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Zz => "zz",
            InteractionKind::XxPlusYy => "xxyy",
        }
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InteractionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zz" => Ok(InteractionKind::Zz),
            "xxyy" | "xx+yy" | "xxplusyy" => Ok(InteractionKind::XxPlusYy),
            other => Err(Error::domain(format!("unknown interaction `{other}`"))),
        }
    }
}

/// Angles of one interleaved rotation pair, in radians.
///
/// Qubit 1 gets `exp(i(alpha1 l1 + beta1 l2 + gamma1 l3))`, qubit 2 likewise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RotationParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub gamma1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub gamma2: f64,
}

impl RotationParams {
    pub const LEN: usize = 6;

    pub fn from_array(a: [f64; 6]) -> Self {
        RotationParams {
            alpha1: a[0],
            beta1: a[1],
            gamma1: a[2],
            alpha2: a[3],
            beta2: a[4],
            gamma2: a[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.alpha1, self.beta1, self.gamma1, self.alpha2, self.beta2, self.gamma2]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// The optimization variable: interaction kind plus `N` rotation pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct SequenceParams {
    interaction: InteractionKind,
    steps: Vec<RotationParams>,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    interaction: InteractionKind,
    n_steps: usize,
    steps: Vec<RotationParams>,
}

impl TryFrom<RawSequence> for SequenceParams {
    type Error = Error;

    fn try_from(raw: RawSequence) -> Result<Self> {
        if raw.n_steps != raw.steps.len() {
            return Err(Error::domain(format!(
                "n_steps = {} but {} steps given",
                raw.n_steps,
                raw.steps.len()
            )));
        }
        SequenceParams::new(raw.interaction, raw.steps)
    }
}

impl From<SequenceParams> for RawSequence {
    fn from(seq: SequenceParams) -> Self {
        RawSequence {
            interaction: seq.interaction,
            n_steps: seq.steps.len(),
            steps: seq.steps,
        }
    }
}

impl SequenceParams {
    pub fn new(interaction: InteractionKind, steps: Vec<RotationParams>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::domain("a sequence needs at least one step"));
        }
        if let Some(n) = steps.iter().position(|s| !s.is_finite()) {
            return Err(Error::domain(format!("non-finite angle in step {}", n + 1)));
        }
        Ok(SequenceParams { interaction, steps })
    }

    /// `n_steps` identity rotations.
    pub fn zeros(interaction: InteractionKind, n_steps: usize) -> Result<Self> {
        Self::new(interaction, vec![RotationParams::default(); n_steps])
    }

    /// Builds a sequence from `6 N` angles laid out step by step.
    pub fn from_flat(interaction: InteractionKind, angles: &[f64]) -> Result<Self> {
        if angles.is_empty() || !angles.len().is_multiple_of(RotationParams::LEN) {
            return Err(Error::domain(format!(
                "angle vector length {} is not a positive multiple of 6",
                angles.len()
            )));
        }
        let steps = angles
            .chunks_exact(RotationParams::LEN)
            .map(|c| RotationParams::from_array(c.try_into().expect("chunk of 6")))
            .collect();
        Self::new(interaction, steps)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.steps.iter().flat_map(|s| s.to_array()).collect()
    }

    pub fn interaction(&self) -> InteractionKind {
        self.interaction
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[RotationParams] {
        &self.steps
    }
}

/// Single-qutrit factors `(q1, q2)` of the rotation pair.
pub fn rotation_factors(p: &RotationParams) -> (Op3, Op3) {
    (
        su2_block_exp(p.alpha1, p.beta1, p.gamma1),
        su2_block_exp(p.alpha2, p.beta2, p.gamma2),
    )
}

pub fn rotation_operator(p: &RotationParams) -> Op9 {
    let (a, b) = rotation_factors(p);
    kron(&a, &b)
}

/// One drift slice, `exp(-i pi G / n_steps)`.
pub fn drift_step(n_steps: usize, kind: InteractionKind) -> Result<Op9> {
    if n_steps == 0 {
        return Err(Error::domain("drift slice needs n_steps >= 1"));
    }
    expi_hermitian(&kind.generator(), -PI / n_steps as f64)
}

/// One noise slice, `exp(-i Delta / n_steps)`.
pub fn noise_step(delta: &Op9, n_steps: usize) -> Result<Op9> {
    if n_steps == 0 {
        return Err(Error::domain("noise slice needs n_steps >= 1"));
    }
    expi_hermitian(delta, -1.0 / n_steps as f64)
}

/// Ordered product `W_N ... W_1` where `W_n = slice(n) * R_n`.
fn interleave(steps: impl Iterator<Item = Op9>, slice: &Op9) -> Op9 {
    steps.fold(Op9::identity(), |acc, r| slice * r * acc)
}

/// The noiseless target `O`, with the same ordering as the noisy evolution.
pub fn target_operator(seq: &SequenceParams) -> Op9 {
    let drift = drift_step(seq.n_steps(), seq.interaction()).expect("n_steps >= 1");
    interleave(seq.steps().iter().map(rotation_operator), &drift)
}

/// Full evolution operator for one noise realization.
///
/// Builds every factor from scratch; the optimizer keeps its own cached
/// slices and is checked against this function.
pub fn evolution_operator(seq: &SequenceParams, noise: &NoiseRealization) -> Result<Op9> {
    let n = seq.n_steps();
    let slice = drift_step(n, seq.interaction())? * noise_step(&build_delta(noise.nonlocal())?, n)?;
    match noise.local() {
        None => Ok(interleave(seq.steps().iter().map(rotation_operator), &slice)),
        Some(local) => {
            if local.steps.len() != n {
                return Err(Error::domain(format!(
                    "local noise has {} steps, sequence has {n}",
                    local.steps.len()
                )));
            }
            Ok(interleave(
                seq.steps()
                    .iter()
                    .zip(&local.steps)
                    .map(|(p, draw)| apply_local_noise(p, draw, local.rule)),
                &slice,
            ))
        }
    }
}

/// Perturbed single-qutrit factors `(q1, q2)`; see [`apply_local_noise`].
pub fn local_noise_factors(p: &RotationParams, draw: &LocalNoiseDraw, rule: MagnitudeRule) -> (Op3, Op3) {
    let eta = p.to_array();
    let mut perturbed = [0.0; 6];
    for (k, out) in perturbed.iter_mut().enumerate() {
        *out = eta[k] * (1.0 + draw.logical[k]);
    }
    let (a, b) = rotation_factors(&RotationParams::from_array(perturbed));
    let (m1, m2) = rule.magnitudes(p);
    (
        leakage_factor(m1, &draw.leakage1) * a,
        leakage_factor(m2, &draw.leakage2) * b,
    )
}

/// Rotation with local control noise.
///
/// Angles are scaled by `1 + delta_eta`, then the result is left-multiplied
/// by `prod_k exp(i m1 delta_k l_k) (x) exp(i m2 delta'_k l_k)` for
/// `k = 4..=8`, where `m1`, `m2` are the unperturbed rotation magnitudes.
/// The `k = 4` factor acts first (rightmost).
pub fn apply_local_noise(p: &RotationParams, draw: &LocalNoiseDraw, rule: MagnitudeRule) -> Op9 {
    let (a, b) = local_noise_factors(p, draw, rule);
    kron(&a, &b)
}

fn leakage_factor(magnitude: f64, coeffs: &[f64; 5]) -> Op3 {
    if magnitude == 0.0 {
        return Op3::identity();
    }
    coeffs.iter().enumerate().fold(Op3::identity(), |acc, (offset, &delta)| {
        let k = GellMannIndex::new(4 + offset).expect("static index");
        expi_gell_mann(k, magnitude * delta) * acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{gell_mann, max_abs_diff, unitarity_defect, C64, I, ONE};
    use crate::noise::{LocalNoise, NoiseRealization, NONLOCAL_CHANNELS};
    use nalgebra::{Matrix2, SVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag9(v: [C64; 9]) -> Op9 {
        Op9::from_diagonal(&SVector::<C64, 9>::from_fn(|k, _| v[k]))
    }

    fn logical_block(u: &Op9) -> nalgebra::Matrix4<C64> {
        let idx = [0, 1, 3, 4];
        nalgebra::Matrix4::from_fn(|r, c| u[(idx[r], idx[c])])
    }

    fn random_params(rng: &mut ChaCha8Rng) -> RotationParams {
        RotationParams::from_array(std::array::from_fn(|_| rng.random_range(-2.0 * PI..2.0 * PI)))
    }

    fn random_draw(rng: &mut ChaCha8Rng, scale: f64) -> LocalNoiseDraw {
        LocalNoiseDraw {
            logical: std::array::from_fn(|_| rng.random_range(-scale..scale)),
            leakage1: std::array::from_fn(|_| rng.random_range(-scale..scale)),
            leakage2: std::array::from_fn(|_| rng.random_range(-scale..scale)),
        }
    }

    fn random_realization(rng: &mut ChaCha8Rng, n: usize, local: bool) -> NoiseRealization {
        let nonlocal = (0..NONLOCAL_CHANNELS).map(|_| rng.random_range(-0.1..0.1)).collect();
        let local = local.then(|| LocalNoise {
            rule: MagnitudeRule::AllAngles,
            steps: (0..n).map(|_| random_draw(rng, 0.01)).collect(),
        });
        NoiseRealization::new(nonlocal, local).unwrap()
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_operator(&RotationParams::default()), Op9::identity());
        let p = RotationParams::from_array([PI / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut x = Op3::zeros();
        x[(0, 1)] = I;
        x[(1, 0)] = I;
        x[(2, 2)] = ONE;
        assert!(max_abs_diff(&rotation_operator(&p), &kron(&x, &Op3::identity())) < 1e-15);
    }

    #[test]
    fn rotation_logical_block_matches_pauli_exponentials() {
        // Independent 2x2 route: exp(i v.sigma) = cos|v| + i sin|v| v.sigma/|v|.
        fn pauli_exp(a: f64, b: f64, c: f64) -> Matrix2<C64> {
            let t = (a * a + b * b + c * c).sqrt();
            let sx = Matrix2::new(C64::new(0.0, 0.0), ONE, ONE, C64::new(0.0, 0.0));
            let sy = Matrix2::new(C64::new(0.0, 0.0), -I, I, C64::new(0.0, 0.0));
            let sz = Matrix2::new(ONE, C64::new(0.0, 0.0), C64::new(0.0, 0.0), -ONE);
            let gen = sx * C64::new(a, 0.0) + sy * C64::new(b, 0.0) + sz * C64::new(c, 0.0);
            Matrix2::identity() * C64::new(t.cos(), 0.0) + gen * C64::new(0.0, t.sin() / t)
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_params(&mut rng);
            let want = pauli_exp(p.alpha1, p.beta1, p.gamma1).kronecker(&pauli_exp(p.alpha2, p.beta2, p.gamma2));
            let got = logical_block(&rotation_operator(&p));
            assert!(max_abs_diff(&got, &want) < 1e-12);
        }
    }

    #[test]
    fn drift_examples() {
        let m = C64::new(-1.0, 0.0);
        let want = diag9([m, m, ONE, m, m, ONE, ONE, ONE, ONE]);
        assert!(max_abs_diff(&drift_step(1, InteractionKind::Zz).unwrap(), &want) < 1e-14);

        let half = logical_block(&drift_step(2, InteractionKind::Zz).unwrap());
        let want = nalgebra::Matrix4::from_diagonal(&nalgebra::Vector4::new(-I, I, I, -I));
        assert!(max_abs_diff(&half, &want) < 1e-14);

        let xy = drift_step(1, InteractionKind::XxPlusYy).unwrap();
        assert!(unitarity_defect(&xy) < 1e-13);
        let direct = expi_hermitian(&InteractionKind::XxPlusYy.generator(), -PI).unwrap();
        assert!(max_abs_diff(&xy, &direct) < 1e-15);

        assert!(drift_step(0, InteractionKind::Zz).is_err());
    }

    #[test]
    fn target_examples() {
        let one = SequenceParams::zeros(InteractionKind::Zz, 1).unwrap();
        let two = SequenceParams::zeros(InteractionKind::Zz, 2).unwrap();
        let drift = drift_step(1, InteractionKind::Zz).unwrap();
        assert!(max_abs_diff(&target_operator(&one), &drift) < 1e-14);
        assert!(max_abs_diff(&target_operator(&two), &drift) < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in [InteractionKind::Zz, InteractionKind::XxPlusYy] {
            let steps = (0..5).map(|_| random_params(&mut rng)).collect();
            let seq = SequenceParams::new(kind, steps).unwrap();
            assert!(unitarity_defect(&target_operator(&seq)) < 1e-12);
        }
    }

    #[test]
    fn step_one_acts_first() {
        let p1 = RotationParams::from_array([0.3, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let p2 = RotationParams::from_array([0.0, 0.7, 0.0, 0.0, 0.0, 0.2]);
        let seq = SequenceParams::new(InteractionKind::Zz, vec![p1, p2]).unwrap();
        let d = drift_step(2, InteractionKind::Zz).unwrap();
        let want = d * rotation_operator(&p2) * d * rotation_operator(&p1);
        assert!(max_abs_diff(&target_operator(&seq), &want) < 1e-14);
    }

    #[test]
    fn zero_noise_evolution_is_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let steps = (0..4).map(|_| random_params(&mut rng)).collect();
        let seq = SequenceParams::new(InteractionKind::XxPlusYy, steps).unwrap();
        let quiet = NoiseRealization::new(vec![0.0; NONLOCAL_CHANNELS], None).unwrap();
        let u = evolution_operator(&seq, &quiet).unwrap();
        assert!(max_abs_diff(&u, &target_operator(&seq)) < 1e-13);
    }

    #[test]
    fn commuting_zz_noise_adds_to_drift_angle() {
        let theta = 0.37;
        let mut nonlocal = vec![0.0; NONLOCAL_CHANNELS];
        nonlocal[crate::noise::channel_index(3, 3).unwrap()] = theta;
        let noise = NoiseRealization::new(nonlocal, None).unwrap();
        for n in [1, 3, 8] {
            let seq = SequenceParams::zeros(InteractionKind::Zz, n).unwrap();
            let u = evolution_operator(&seq, &noise).unwrap();
            let want = expi_hermitian(&InteractionKind::Zz.generator(), -(PI + theta)).unwrap();
            assert!(max_abs_diff(&u, &want) < 1e-13, "n={n}");
        }
    }

    #[test]
    fn single_step_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = random_params(&mut rng);
        let noise = random_realization(&mut rng, 1, true);
        let seq = SequenceParams::new(InteractionKind::Zz, vec![p]).unwrap();
        let local = noise.local().unwrap();
        let want = drift_step(1, InteractionKind::Zz).unwrap()
            * noise_step(&build_delta(noise.nonlocal()).unwrap(), 1).unwrap()
            * apply_local_noise(&p, &local.steps[0], local.rule);
        assert!(max_abs_diff(&evolution_operator(&seq, &noise).unwrap(), &want) < 1e-15);
    }

    #[test]
    fn random_evolution_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for trial in 0..1000 {
            let n = 1 + trial % 6;
            let steps = (0..n).map(|_| random_params(&mut rng)).collect();
            let kind = if trial % 2 == 0 { InteractionKind::Zz } else { InteractionKind::XxPlusYy };
            let seq = SequenceParams::new(kind, steps).unwrap();
            let noise = random_realization(&mut rng, n, trial % 3 == 0);
            assert!(unitarity_defect(&evolution_operator(&seq, &noise).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn mismatched_local_noise_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let noise = random_realization(&mut rng, 2, true);
        let seq = SequenceParams::zeros(InteractionKind::Zz, 3).unwrap();
        assert!(matches!(evolution_operator(&seq, &noise), Err(Error::Domain(_))));
    }

    #[test]
    fn local_noise_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_params(&mut rng);
        let quiet = LocalNoiseDraw::default();
        assert!(max_abs_diff(&apply_local_noise(&p, &quiet, MagnitudeRule::AllAngles), &rotation_operator(&p)) < 1e-15);

        let loud = random_draw(&mut rng, 0.2);
        let identity = apply_local_noise(&RotationParams::default(), &loud, MagnitudeRule::AllAngles);
        assert!(max_abs_diff(&identity, &Op9::identity()) < 1e-15);

        let p = RotationParams::from_array([PI, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut draw = LocalNoiseDraw::default();
        draw.leakage1[0] = 0.1;
        let l4 = gell_mann(GellMannIndex::new(4).unwrap());
        let left = kron(&expi_hermitian(&l4, PI * 0.1).unwrap(), &Op3::identity());
        let want = left * rotation_operator(&p);
        assert!(max_abs_diff(&apply_local_noise(&p, &draw, MagnitudeRule::AllAngles), &want) < 1e-14);
    }

    #[test]
    fn local_noise_order_and_magnitudes() {
        // Dense oracle: build every factor with the eigendecomposition route.
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for rule in [MagnitudeRule::AllAngles, MagnitudeRule::ExcludeGamma] {
            let p = random_params(&mut rng);
            let draw = random_draw(&mut rng, 0.05);
            let eta = p.to_array();
            let pert = RotationParams::from_array(std::array::from_fn(|k| eta[k] * (1.0 + draw.logical[k])));
            let (m1, m2) = match rule {
                MagnitudeRule::AllAngles => (
                    (p.alpha1.powi(2) + p.beta1.powi(2) + p.gamma1.powi(2)).sqrt(),
                    (p.alpha2.powi(2) + p.beta2.powi(2) + p.gamma2.powi(2)).sqrt(),
                ),
                MagnitudeRule::ExcludeGamma => (
                    (p.alpha1.powi(2) + p.beta1.powi(2)).sqrt(),
                    (p.alpha2.powi(2) + p.beta2.powi(2)).sqrt(),
                ),
            };
            let mut factor = Op9::identity();
            for k in 4..=8 {
                let lk = gell_mann(GellMannIndex::new(k).unwrap());
                let e1 = expi_hermitian(&lk, m1 * draw.leakage1[k - 4]).unwrap();
                let e2 = expi_hermitian(&lk, m2 * draw.leakage2[k - 4]).unwrap();
                factor = kron(&e1, &e2) * factor;
            }
            let want = factor * rotation_operator(&pert);
            assert!(max_abs_diff(&apply_local_noise(&p, &draw, rule), &want) < 1e-12);
        }
    }

    #[test]
    fn flat_round_trip_and_validation() {
        let flat: Vec<f64> = (0..12).map(|k| k as f64 * 0.1).collect();
        let seq = SequenceParams::from_flat(InteractionKind::Zz, &flat).unwrap();
        assert_eq!(seq.n_steps(), 2);
        assert_eq!(seq.to_flat(), flat);
        assert!(SequenceParams::from_flat(InteractionKind::Zz, &flat[..7]).is_err());
        assert!(SequenceParams::zeros(InteractionKind::Zz, 0).is_err());
        assert!(SequenceParams::from_flat(InteractionKind::Zz, &[f64::NAN; 6]).is_err());
    }

    #[test]
    fn interaction_parsing() {
        assert_eq!("zz".parse::<InteractionKind>().unwrap(), InteractionKind::Zz);
        assert_eq!("XXYY".parse::<InteractionKind>().unwrap(), InteractionKind::XxPlusYy);
        assert!("xy".parse::<InteractionKind>().is_err());
    }
}
