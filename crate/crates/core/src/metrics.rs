// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

//! Gate-quality measures.
//!
//! Two families live here: the trace fidelity of the full two-qutrit gate
//! against its noiseless target, and local-equivalence measures of the
//! projected 4x4 logical block (Makhlin invariants, Weyl chamber
//! coordinates, distance to and fidelity with the nearest perfect entangler).
//!
//! Makhlin invariants and Weyl coordinates use the magic basis
//!
//! ```text
//! Q = 1/sqrt(2) [[1, 0, 0, i], [0, i, 1, 0], [0, i, -1, 0], [1, 0, 0, -i]]
//! ```
//!
//! and the canonical form `exp(i/2 (c1 XX + c2 YY + c3 ZZ))`, under which
//! CNOT sits at `(pi/2, 0, 0)` and SWAP at `(pi/2, pi/2, pi/2)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::algebra::{Op4, Op9, C64, I, ONE, ZERO};
use crate::error::{Error, Result};

/// Smallest `|det|` of a logical block that is treated as non-singular.
pub const SINGULAR_DET_TOL: f64 = 1e-12;
/// Root imaginary parts above this make [`pe_assessment`] fail.
pub const ROOT_IMAG_ERROR: f64 = 1e-3;

/// Full-space indices of `|00>, |01>, |10>, |11>`.
pub const LOGICAL_INDICES: [usize; 4] = [0, 1, 3, 4];

/// The 4x4 block of `u` on the logical subspace. Not unitary when `u` leaks.
pub fn project_logical(u: &Op9) -> Op4 {
    Op4::from_fn(|r, c| u[(LOGICAL_INDICES[r], LOGICAL_INDICES[c])])
}

/// `1 - |tr(target^dagger u)|^2 / 81`.
pub fn gate_error(u: &Op9, target: &Op9) -> f64 {
    1.0 - trace_fidelity(u, target)
}

/// `|tr(target^dagger u)|^2 / 81`, clamped to `[0, 1]`.
pub fn trace_fidelity(u: &Op9, target: &Op9) -> f64 {
    let overlap: C64 = target.iter().zip(u.iter()).map(|(t, x)| t.conj() * x).sum();
    (overlap.norm_sqr() / 81.0).clamp(0.0, 1.0)
}

fn magic_basis() -> &'static Op4 {
    static Q: OnceLock<Op4> = OnceLock::new();
    Q.get_or_init(|| {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (o, z, i) = (ONE * s, ZERO, I * s);
        Op4::new(o, z, z, i, z, i, o, z, z, i, -o, z, o, z, z, -i)
    })
}

/// `u_B^T u_B` with `u_B = Q^dagger u Q`.
fn magic_gram(u: &Op4) -> Op4 {
    let q = magic_basis();
    let ub = q.adjoint() * u * q;
    ub.transpose() * ub
}

fn checked_det(u: &Op4) -> Result<C64> {
    let det = u.determinant();
    if !(det.norm() >= SINGULAR_DET_TOL) {
        return Err(Error::SingularProjection {
            det_abs: det.norm(),
            realization: None,
        });
    }
    Ok(det)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MakhlinInvariants {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    /// Magnitude of the discarded imaginary part of `g3`.
    pub residual_imag: f64,
}

/// Local invariants `g1 + i g2 = tr(m)^2 / (16 det u)` and
/// `g3 = (tr(m)^2 - tr(m^2)) / (4 det u)` of a logical block.
pub fn makhlin_invariants(u4: &Op4) -> Result<MakhlinInvariants> {
    let det = checked_det(u4)?;
    let m = magic_gram(u4);
    let tr = m.trace();
    let tr_sq = (m * m).trace();
    let g12 = tr * tr / (det * 16.0);
    let g3 = (tr * tr - tr_sq) / (det * 4.0);
    Ok(MakhlinInvariants {
        g1: g12.re,
        g2: g12.im,
        g3: g3.re,
        residual_imag: g3.im.abs(),
    })
}

/// Roots of `z^3 + b2 z^2 + b1 z + b0` in closed form.
fn cubic_roots(b2: f64, b1: f64, b0: f64) -> [C64; 3] {
    // Depressed cubic t^3 + p t + q with z = t - b2 / 3.
    let shift = -b2 / 3.0;
    let p = b1 - b2 * b2 / 3.0;
    let q = 2.0 * b2.powi(3) / 27.0 - b2 * b1 / 3.0 + b0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc <= 0.0 {
        if p == 0.0 {
            return [C64::new(shift, 0.0); 3];
        }
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        std::array::from_fn(|k| C64::new(shift + r * (phi - 2.0 * PI * k as f64 / 3.0).cos(), 0.0))
    } else {
        let sq = disc.sqrt();
        let u = (-q / 2.0 + sq).cbrt();
        let v = (-q / 2.0 - sq).cbrt();
        let re = shift - (u + v) / 2.0;
        let im = 3f64.sqrt() / 2.0 * (u - v);
        [C64::new(shift + u + v, 0.0), C64::new(re, im), C64::new(re, -im)]
    }
}

/// Perfect-entangler distance data derived from the Makhlin invariants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeAssessment {
    /// `g3 sqrt(g1^2 + g2^2) - g1`.
    pub d: f64,
    /// `pi - acos(z1) - acos(z3)`.
    pub s: f64,
    /// Sign-corrected distance; zero for perfect entanglers.
    pub distance: f64,
    /// Real parts of the cubic roots, clamped to `[-1, 1]`, descending.
    pub roots: [f64; 3],
    /// Largest discarded imaginary part among the roots.
    pub root_imag: f64,
}

impl PeAssessment {
    /// Evaluates the assessment without rejecting complex roots.
    ///
    /// Leaky logical blocks perturb a triple root into a complex triplet of
    /// size `O(noise^(1/3))`; the cost functional uses the real parts.
    pub fn evaluate(g: &MakhlinInvariants) -> PeAssessment {
        let norm12 = g.g1.hypot(g.g2);
        let d = g.g3 * norm12 - g.g1;
        let raw = cubic_roots(-g.g3, 4.0 * norm12 - 1.0, g.g3 - 4.0 * g.g1);
        let root_imag = raw.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let mut roots = raw.map(|z| z.re.clamp(-1.0, 1.0));
        roots.sort_by(|a, b| b.total_cmp(a));
        let s = PI - roots[0].acos() - roots[2].acos();
        let distance = if d > 0.0 && s > 0.0 {
            d
        } else if d < 0.0 && s < 0.0 {
            -d
        } else {
            0.0
        };
        PeAssessment {
            d,
            s,
            distance,
            roots,
            root_imag,
        }
    }
}

/// [`PeAssessment::evaluate`], failing when the cubic roots are far from real.
pub fn pe_assessment(g: &MakhlinInvariants) -> Result<PeAssessment> {
    let a = PeAssessment::evaluate(g);
    if a.root_imag > ROOT_IMAG_ERROR {
        return Err(Error::DegenerateInvariants { imag: a.root_imag });
    }
    Ok(a)
}

/// Sign-corrected distance of a logical block to the perfect entanglers.
pub fn pe_distance(u4: &Op4) -> Result<f64> {
    Ok(PeAssessment::evaluate(&makhlin_invariants(u4)?).distance)
}

/// Weyl chamber coordinates, canonicalized to
/// `pi - c2 >= c1 >= c2 >= c3 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylCoordinates {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl WeylCoordinates {
    /// Maps an arbitrary coordinate triple to its chamber representative.
    ///
    /// Uses the local equivalences: shifting any coordinate by `pi`, flipping
    /// the signs of two coordinates, and permuting them.
    pub fn canonicalize(raw: [f64; 3]) -> WeylCoordinates {
        const ZERO_TOL: f64 = 1e-12;
        let reduced = raw.map(|c| c - PI * (c / PI).round());
        let negatives = reduced.iter().filter(|&&c| c < 0.0).count();
        let mut c = reduced.map(f64::abs);
        c.sort_by(|a, b| b.total_cmp(a));
        if negatives % 2 == 1 && c[2] > ZERO_TOL {
            c[0] = PI - c[0];
        }
        WeylCoordinates {
            c1: c[0],
            c2: c[1],
            c3: c[2],
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.c1, self.c2, self.c3]
    }
}

/// Weyl coordinates of a logical block (not necessarily unitary).
pub fn weyl_coordinates(u4: &Op4) -> Result<WeylCoordinates> {
    let det = checked_det(u4)?;
    let normalized = u4 / det.powf(0.25);
    let m = magic_gram(&normalized);
    let eig = m
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::numeric("Schur decomposition of the magic-basis Gram matrix failed"))?;
    let phases: [f64; 4] = std::array::from_fn(|k| eig[k].arg());
    // Eigenphases are c . v for v in {(1,-1,1), (-1,1,1), (1,1,-1), (-1,-1,-1)};
    // any assignment of eigenvalues to slots is Weyl-equivalent.
    let raw = [
        (phases[0] + phases[2]) / 2.0,
        (phases[1] + phases[2]) / 2.0,
        (phases[0] + phases[1]) / 2.0,
    ];
    Ok(WeylCoordinates::canonicalize(raw))
}

/// Closest unitary to `u4` in Frobenius norm (polar factor).
pub fn unitarize(u4: &Op4) -> Result<Op4> {
    let svd = u4.svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => Ok(u * v_t),
        _ => Err(Error::numeric("SVD of logical block failed")),
    }
}

/// `exp(i/2 (c1 XX + c2 YY + c3 ZZ))`.
pub fn canonical_gate(c: [f64; 3]) -> Op4 {
    let z = C64::new(0.0, 0.0);
    let sx = Matrix2::new(z, ONE, ONE, z);
    let sy = Matrix2::new(z, -I, I, z);
    let sz = Matrix2::new(ONE, z, z, -ONE);
    [(c[0], sx), (c[1], sy), (c[2], sz)]
        .iter()
        .fold(Op4::identity(), |acc, (angle, pauli)| {
            let pp = pauli.kronecker(pauli);
            let factor = Op4::identity() * C64::new((angle / 2.0).cos(), 0.0) + pp * C64::new(0.0, (angle / 2.0).sin());
            factor * acc
        })
}

/// Normalized fidelity with the nearest perfect entangler.
///
/// Cases are checked in order and the first match wins.
pub fn pe_fidelity(c: &WeylCoordinates) -> f64 {
    let f = |x: f64| ((x - FRAC_PI_2) / 4.0).cos().powi(2);
    if c.c1 + c.c2 <= FRAC_PI_2 {
        f(c.c1 + c.c2)
    } else if c.c2 + c.c3 >= FRAC_PI_2 {
        f(c.c2 + c.c3)
    } else if c.c1 - c.c2 >= FRAC_PI_2 {
        f(c.c1 - c.c2)
    } else {
        1.0
    }
}

/// How a (possibly leaky) logical block is turned into a two-qubit gate
/// before computing Weyl coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Use the raw block with determinant normalization.
    #[default]
    Raw,
    /// Replace the block by its polar (nearest unitary) factor.
    Polar,
}

/// `1 - F_PE` of one full gate.
pub fn pe_error(u: &Op9, projection: Projection) -> Result<f64> {
    let block = match projection {
        Projection::Raw => project_logical(u),
        Projection::Polar => unitarize(&project_logical(u))?,
    };
    Ok(1.0 - pe_fidelity(&weyl_coordinates(&block)?))
}

/// Mean `1 - F_PE` over realizations, summed in index order.
pub fn pe_error_ensemble(us: &[Op9], projection: Projection) -> Result<f64> {
    if us.is_empty() {
        return Err(Error::domain("pe_error_ensemble needs at least one gate"));
    }
    let mut total = 0.0;
    for (m, u) in us.iter().enumerate() {
        total += pe_error(u, projection).map_err(|e| e.at_realization(m))?;
    }
    Ok(total / us.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{expi_hermitian, gell_mann, kron, GellMannIndex, Op3};
    use std::f64::consts::FRAC_PI_8;

    fn cz() -> Op4 {
        Op4::from_diagonal(&nalgebra::Vector4::new(ONE, ONE, ONE, -ONE))
    }

    fn swap() -> Op4 {
        let mut s = Op4::zeros();
        s[(0, 0)] = ONE;
        s[(1, 2)] = ONE;
        s[(2, 1)] = ONE;
        s[(3, 3)] = ONE;
        s
    }

    fn cnot() -> Op4 {
        let mut s = Op4::zeros();
        s[(0, 0)] = ONE;
        s[(1, 1)] = ONE;
        s[(2, 3)] = ONE;
        s[(3, 2)] = ONE;
        s
    }

    fn embed(u4: &Op4) -> Op9 {
        let mut u = Op9::identity();
        for r in 0..4 {
            for c in 0..4 {
                u[(LOGICAL_INDICES[r], LOGICAL_INDICES[c])] = u4[(r, c)];
            }
        }
        u
    }

    fn assert_g(u: &Op4, want: [f64; 3]) {
        let g = makhlin_invariants(u).unwrap();
        for (got, w) in [g.g1, g.g2, g.g3].iter().zip(want) {
            assert!((got - w).abs() < 1e-9, "{g:?} vs {want:?}");
        }
        assert!(g.residual_imag < 1e-12);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_logical(&Op9::identity()), Op4::identity());
        let signs = [-1.0, -1.0, 1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
        let drift = Op9::from_diagonal(&nalgebra::SVector::<C64, 9>::from_fn(|k, _| C64::new(signs[k], 0.0)));
        assert_eq!(project_logical(&drift), -Op4::identity());

        let l4 = gell_mann(GellMannIndex::new(4).unwrap());
        let leak = kron(&expi_hermitian(&l4, 0.4).unwrap(), &Op3::identity());
        let block = project_logical(&leak);
        // |00> and |01> lose amplitude cos(0.4) to the leakage level.
        assert!((block[(0, 0)].norm() - 0.4f64.cos()).abs() < 1e-14);
        assert!((block[(3, 3)].norm() - 1.0).abs() < 1e-14);
        assert!(block.determinant().norm() < 1.0);
    }

    #[test]
    fn makhlin_known_values() {
        assert_g(&Op4::identity(), [1.0, 0.0, 3.0]);
        assert_g(&cz(), [0.0, 0.0, 1.0]);
        assert_g(&cnot(), [0.0, 0.0, 1.0]);
        assert_g(&swap(), [-1.0, 0.0, -3.0]);
    }

    #[test]
    fn singular_block_is_rejected() {
        let err = makhlin_invariants(&Op4::zeros()).unwrap_err();
        assert!(matches!(err, Error::SingularProjection { .. }));
        assert!(weyl_coordinates(&Op4::zeros()).is_err());
    }

    #[test]
    fn cubic_matches_factored_forms() {
        let check = |roots: [C64; 3], want: [f64; 3]| {
            let mut got: Vec<f64> = roots.iter().map(|z| z.re).collect();
            got.sort_by(|a, b| b.total_cmp(a));
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-6, "{got:?} vs {want:?}");
            }
        };
        check(cubic_roots(-3.0, 3.0, -1.0), [1.0, 1.0, 1.0]);
        check(cubic_roots(3.0, 3.0, 1.0), [-1.0, -1.0, -1.0]);
        check(cubic_roots(-1.0, -1.0, 1.0), [1.0, 1.0, -1.0]);
        // (z - 0.5)(z + 0.2)(z - 0.9)
        check(cubic_roots(-1.2, 0.17, 0.09), [0.9, 0.5, -0.2]);
        // (z - 2)(z^2 + 1): one real, complex pair.
        let r = cubic_roots(-2.0, 1.0, -2.0);
        assert!((r[0] - C64::new(2.0, 0.0)).norm() < 1e-12);
        assert!((r[1].im.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pe_assessment_known_values() {
        let id = pe_assessment(&makhlin_invariants(&Op4::identity()).unwrap()).unwrap();
        assert!((id.d - 2.0).abs() < 1e-9);
        // The triple root is ill-conditioned: roundoff of size eps moves the
        // roots by eps^(1/3), so s is only close to pi.
        assert!((id.s - PI).abs() < 1e-2, "s = {}", id.s);
        assert!((id.distance - 2.0).abs() < 1e-9);

        let cnot = pe_assessment(&makhlin_invariants(&cnot()).unwrap()).unwrap();
        assert!(cnot.d.abs() < 1e-12);
        assert_eq!(cnot.distance, 0.0);

        let sw = pe_assessment(&makhlin_invariants(&swap()).unwrap()).unwrap();
        assert!((sw.d + 2.0).abs() < 1e-9);
        assert!((sw.s + PI).abs() < 1e-2, "s = {}", sw.s);
        assert!((sw.distance - 2.0).abs() < 1e-9);
    }

    #[test]
    fn strong_complex_roots_are_degenerate() {
        let g = MakhlinInvariants {
            // z^3 + 3z - 4 = (z - 1)(z^2 + z + 4)
            g1: 1.0,
            g2: 0.0,
            g3: 0.0,
            residual_imag: 0.0,
        };
        assert!(matches!(pe_assessment(&g), Err(Error::DegenerateInvariants { .. })));
        assert!(PeAssessment::evaluate(&g).distance >= 0.0);
    }

    #[test]
    fn weyl_known_values() {
        let close = |c: WeylCoordinates, want: [f64; 3]| {
            for (g, w) in c.as_array().iter().zip(want) {
                assert!((g - w).abs() < 1e-7, "{c:?} vs {want:?}");
            }
        };
        close(weyl_coordinates(&Op4::identity()).unwrap(), [0.0, 0.0, 0.0]);
        close(weyl_coordinates(&cz()).unwrap(), [FRAC_PI_2, 0.0, 0.0]);
        close(weyl_coordinates(&cnot()).unwrap(), [FRAC_PI_2, 0.0, 0.0]);
        close(weyl_coordinates(&swap()).unwrap(), [FRAC_PI_2, FRAC_PI_2, FRAC_PI_2]);
    }

    #[test]
    fn canonicalization_lands_in_chamber() {
        let cases = [[0.3, -0.2, 0.1], [2.9, 0.4, -1.3], [-4.0, 7.5, 0.25], [1.2, 1.0, 0.9]];
        for raw in cases {
            let c = WeylCoordinates::canonicalize(raw);
            assert!(c.c1 >= c.c2 && c.c2 >= c.c3 && c.c3 >= 0.0, "{c:?}");
            assert!(c.c1 <= PI - c.c2 + 1e-15, "{c:?}");
        }
    }

    #[test]
    fn pe_fidelity_known_values() {
        let id = pe_fidelity(&WeylCoordinates { c1: 0.0, c2: 0.0, c3: 0.0 });
        assert!((id - FRAC_PI_8.cos().powi(2)).abs() < 1e-12);
        assert!((id - 0.853553).abs() < 1e-6);
        assert_eq!(pe_fidelity(&WeylCoordinates { c1: FRAC_PI_2, c2: 0.0, c3: 0.0 }), 1.0);
        let sw = pe_fidelity(&WeylCoordinates {
            c1: FRAC_PI_2,
            c2: FRAC_PI_2,
            c3: FRAC_PI_2,
        });
        assert!((sw - id).abs() < 1e-12);
        // B gate sits inside the polyhedron.
        assert_eq!(pe_fidelity(&WeylCoordinates { c1: FRAC_PI_2, c2: PI / 4.0, c3: 0.0 }), 1.0);
    }

    #[test]
    fn overlapping_branches_agree() {
        // (pi/2, 0, 0) satisfies the first and third guards.
        let c = WeylCoordinates { c1: FRAC_PI_2, c2: 0.0, c3: 0.0 };
        let third = ((c.c1 - c.c2 - FRAC_PI_2) / 4.0).cos().powi(2);
        assert_eq!(pe_fidelity(&c), third);
        // Mirror points on the c3 = 0 face share their fidelity.
        let a = WeylCoordinates { c1: 0.4, c2: 0.3, c3: 0.0 };
        let b = WeylCoordinates { c1: PI - 0.4, c2: 0.3, c3: 0.0 };
        assert!((pe_fidelity(&a) - pe_fidelity(&b)).abs() < 1e-14);
    }

    #[test]
    fn gate_error_examples() {
        let zz = kron(&gell_mann(GellMannIndex::new(3).unwrap()), &gell_mann(GellMannIndex::new(3).unwrap()));
        let o = expi_hermitian(&(kron(&gell_mann(GellMannIndex::new(1).unwrap()), &Op3::identity()) + zz), 0.7).unwrap();
        assert!(gate_error(&o, &o).abs() < 1e-14);
        assert!(gate_error(&(o * C64::from_polar(1.0, 1.3)), &o).abs() < 1e-14);
        let kicked = expi_hermitian(&zz, FRAC_PI_2).unwrap() * o;
        assert!((gate_error(&kicked, &o) - (1.0 - 25.0 / 81.0)).abs() < 1e-13);
        assert!((gate_error(&kicked, &o) - gate_error(&o, &kicked)).abs() < 1e-15);
    }

    #[test]
    fn pe_error_ensemble_examples() {
        let c = embed(&cnot());
        let id = Op9::identity();
        assert!(pe_error_ensemble(&[c, c], Projection::Raw).unwrap().abs() < 1e-12);
        let want = 1.0 - FRAC_PI_8.cos().powi(2);
        assert!((pe_error_ensemble(&[id, id], Projection::Raw).unwrap() - want).abs() < 1e-9);
        assert!((pe_error_ensemble(&[c, id], Projection::Raw).unwrap() - want / 2.0).abs() < 1e-9);
        assert!(pe_error_ensemble(&[], Projection::Raw).is_err());

        let mut broken = Op9::identity();
        for k in LOGICAL_INDICES {
            broken[(k, k)] = ZERO;
        }
        match pe_error_ensemble(&[c, broken], Projection::Raw) {
            Err(Error::SingularProjection { realization, .. }) => assert_eq!(realization, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn polar_projection_of_unitary_block_is_identity_map() {
        let u = canonical_gate([1.1, 0.6, 0.2]);
        let p = unitarize(&u).unwrap();
        assert!(crate::algebra::max_abs_diff(&p, &u) < 1e-12);
    }
}
