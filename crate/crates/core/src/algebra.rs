// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

//! Linear-algebra substrate: the Gell-Mann basis of a single qutrit, tensor
//! products onto the two-qutrit space and exponentials of Hermitian generators.
//!
//! All operators are dense, fixed-size complex matrices. Two-qutrit indices are
//! row-major: index `3 * a + b` labels qutrit 1 in level `a` and qutrit 2 in
//! level `b`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense `D x D` complex operator.
pub type Operator<const D: usize> = SMatrix<C64, D, D>;
/// Single-qutrit operator.
pub type Op3 = Operator<3>;
/// Logical two-qubit operator.
pub type Op4 = Operator<4>;
/// Two-qutrit operator.
pub type Op9 = Operator<9>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance for the Hermiticity precondition of [`expi_hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Index into the Gell-Mann basis, `0..=8`. Index 0 is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GellMannIndex(u8);

impl GellMannIndex {
    pub fn new(i: usize) -> Result<Self> {
        if i <= 8 {
            Ok(GellMannIndex(i as u8))
        } else {
            Err(Error::domain(format!("Gell-Mann index {i} outside 0..=8")))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = GellMannIndex> {
        (0u8..=8).map(GellMannIndex)
    }
}

fn build_gell_mann(i: usize) -> Op3 {
    let mut m = Op3::zeros();
    match i {
        0 => m = Op3::identity(),
        1 => {
            m[(0, 1)] = ONE;
            m[(1, 0)] = ONE;
        }
        2 => {
            m[(0, 1)] = -I;
            m[(1, 0)] = I;
        }
        3 => {
            m[(0, 0)] = ONE;
            m[(1, 1)] = -ONE;
        }
        4 => {
            m[(0, 2)] = ONE;
            m[(2, 0)] = ONE;
        }
        5 => {
            m[(0, 2)] = -I;
            m[(2, 0)] = I;
        }
        6 => {
            m[(1, 2)] = ONE;
            m[(2, 1)] = ONE;
        }
        7 => {
            m[(1, 2)] = -I;
            m[(2, 1)] = I;
        }
        8 => {
            let r = 1.0 / 3f64.sqrt();
            m[(0, 0)] = C64::new(r, 0.0);
            m[(1, 1)] = C64::new(r, 0.0);
            m[(2, 2)] = C64::new(-2.0 * r, 0.0);
        }
        _ => unreachable!("GellMannIndex is validated on construction"),
    }
    m
}

/// The nine basis matrices, built once.
pub fn gell_mann_basis() -> &'static [Op3; 9] {
    static BASIS: OnceLock<[Op3; 9]> = OnceLock::new();
    BASIS.get_or_init(|| std::array::from_fn(build_gell_mann))
}

pub fn gell_mann(i: GellMannIndex) -> Op3 {
    gell_mann_basis()[i.get()]
}

/// `lambda_i (x) lambda_j` on the two-qutrit space.
pub fn gell_mann_pair(i: GellMannIndex, j: GellMannIndex) -> Op9 {
    let basis = gell_mann_basis();
    kron(&basis[i.get()], &basis[j.get()])
}

/// Tensor product with qutrit 1 as the major index.
pub fn kron(a: &Op3, b: &Op3) -> Op9 {
    a.kronecker(b)
}

/// Largest entry of `|A - A^dagger|`.
pub fn hermiticity_defect<const D: usize>(a: &Operator<D>) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..D {
        for c in r..D {
            worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
        }
    }
    worst
}

/// Largest entry of `|U^dagger U - I|`.
pub fn unitarity_defect<const D: usize>(u: &Operator<D>) -> f64 {
    let gram = u.adjoint() * u;
    let mut worst = 0.0f64;
    for r in 0..D {
        for c in 0..D {
            let target = if r == c { ONE } else { ZERO };
            worst = worst.max((gram[(r, c)] - target).norm());
        }
    }
    worst
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff<const D: usize>(a: &Operator<D>, b: &Operator<D>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub(crate) fn all_finite<const D: usize>(a: &Operator<D>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `exp(i * scale * h)` for Hermitian `h`, via `h = V diag(w) V^dagger`.
pub fn expi_hermitian<const D: usize>(h: &Operator<D>, scale: f64) -> Result<Operator<D>> {
    if !all_finite(h) {
        return Err(Error::domain("generator has non-finite entries"));
    }
    let defect = hermiticity_defect(h);
    if defect > HERMITIAN_TOL {
        return Err(Error::domain(format!(
            "generator is not Hermitian (defect {defect:e})"
        )));
    }
    if scale == 0.0 {
        return Ok(Operator::<D>::identity());
    }
    let dynamic = DMatrix::from_fn(D, D, |r, c| h[(r, c)]);
    let eig = SymmetricEigen::try_new(dynamic, f64::EPSILON, 0)
        .ok_or_else(|| Error::numeric("Hermitian eigensolver did not converge"))?;
    let phases: Vec<C64> = eig
        .eigenvalues
        .iter()
        .map(|&w| C64::from_polar(1.0, scale * w))
        .collect();
    let v = &eig.eigenvectors;
    let mut out = Operator::<D>::zeros();
    for r in 0..D {
        for c in 0..D {
            let mut acc = ZERO;
            for (k, phase) in phases.iter().enumerate() {
                acc += v[(r, k)] * phase * v[(c, k)].conj();
            }
            out[(r, c)] = acc;
        }
    }
    if !all_finite(&out) {
        return Err(Error::numeric("matrix exponential produced non-finite entries"));
    }
    Ok(out)
}

/// Closed form of `exp(i (a lambda_1 + b lambda_2 + c lambda_3))`.
///
/// The generator lives in the upper 2x2 block, so the result is an SU(2)
/// rotation there and 1 on the leakage level.
pub fn su2_block_exp(a: f64, b: f64, c: f64) -> Op3 {
    let theta = (a * a + b * b + c * c).sqrt();
    let (cos, sinc) = if theta < 1e-8 {
        // Taylor expansion of sin(t)/t; exact to double precision at this size.
        (1.0 - 0.5 * theta * theta, 1.0 - theta * theta / 6.0)
    } else {
        (theta.cos(), theta.sin() / theta)
    };
    let mut m = Op3::zeros();
    // cos + i sinc (c sz + a sx + b sy)
    m[(0, 0)] = C64::new(cos, sinc * c);
    m[(1, 1)] = C64::new(cos, -sinc * c);
    m[(0, 1)] = C64::new(sinc * b, sinc * a);
    m[(1, 0)] = C64::new(-sinc * b, sinc * a);
    m[(2, 2)] = ONE;
    m
}

/// Closed form of `exp(i theta lambda_k)` for a single basis element.
///
/// For `k` in `1..=7` the generator satisfies `lambda^3 = lambda`, so
/// `exp(i t lambda) = 1 + i sin(t) lambda + (cos(t) - 1) lambda^2`.
pub fn expi_gell_mann(k: GellMannIndex, theta: f64) -> Op3 {
    let lambda = &gell_mann_basis()[k.get()];
    match k.get() {
        0 => Op3::identity() * C64::from_polar(1.0, theta),
        8 => {
            let mut m = Op3::zeros();
            for d in 0..3 {
                m[(d, d)] = C64::from_polar(1.0, theta * lambda[(d, d)].re);
            }
            m
        }
        _ => {
            let sq = lambda * lambda;
            Op3::identity() + lambda * C64::new(0.0, theta.sin()) + sq * C64::new(theta.cos() - 1.0, 0.0)
        }
    }
}
