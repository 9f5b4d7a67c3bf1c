// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed or produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The logical projection is (numerically) singular, i.e. total leakage.
    #[error("singular logical projection: |det| = {det_abs:e}{}", realization_suffix(*.realization))]
    SingularProjection {
        det_abs: f64,
        realization: Option<usize>,
    },

    /// The cubic built from the Makhlin invariants has strongly complex roots.
    #[error("degenerate Makhlin invariants: root imaginary part {imag:e}")]
    DegenerateInvariants { imag: f64 },

    /// A warm start needs the solution of a shorter sequence that is not available.
    #[error("missing prerequisite solution for length {divisor} (needed by length {length})")]
    MissingDependency { length: usize, divisor: usize },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file parsed but did not match the expected schema.
    #[error("schema error in {path} (field `{field}`): {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },

    /// Re-evaluating an archived solution did not reproduce its recorded metrics.
    #[error("verification mismatch for N={n_steps} field `{field}`: recorded {recorded:e}, recomputed {recomputed:e}")]
    Verification {
        n_steps: usize,
        field: String,
        recorded: f64,
        recomputed: f64,
    },
}

fn realization_suffix(realization: Option<usize>) -> String {
    match realization {
        Some(m) => format!(" (realization {m})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Attaches a realization index to singular-projection errors.
    pub(crate) fn at_realization(self, index: usize) -> Self {
        match self {
            Error::SingularProjection { det_abs, .. } => Error::SingularProjection {
                det_abs,
                realization: Some(index),
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
