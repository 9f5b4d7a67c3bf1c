// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

//! Numerical synthesis of composite two-qubit entangling sequences.
//!
//! Each qubit is a three-level system (two logical levels plus one leakage
//! level). A noisy conditional-phase style interaction is split into `N`
//! slices, and single-qubit rotations acting inside the logical subspace are
//! interleaved between them. The rotation angles are chosen by a quasi-Newton
//! search over a Monte-Carlo ensemble of coherent noise draws so that the whole
//! sequence is a logical perfect entangler and insensitive to both logical and
//! leakage errors.
//!
//! Module map:
//!
//! * [`algebra`]: Gell-Mann basis, tensor products, Hermitian exponentials.
//! * [`sequence`]: rotation, drift, target and noisy evolution operators.
//! * [`noise`]: seeded noise ensembles and the local-rotation fidelity check.
//! * [`metrics`]: gate error, Makhlin invariants, Weyl coordinates and
//!   perfect-entangler measures.
//! * [`optimizer`]: the robust cost functional, finite-difference gradients,
//!   L-BFGS and the divisor-chain warm start.
//! * [`harness`]: length sweeps, noise-strength grids, baselines and the JSON
//!   solution archive used by the `leakseq` binary.

pub mod algebra;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod noise;
pub mod optimizer;
pub mod sequence;

pub use error::{Error, Result};
